"""Reading and writing graph description files.

A file is a JSON object ``{"version": 1, "graph": {...}}``. Explicit graphs
list their vertices and edge bundles; recipe graphs name a construction and
its parameters, together with a prefix of the deterministic choices made
while building it so that reloading can confirm the re-expansion.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .constructor import ConstructionRecipe, LayeredGraph, backbone, derivation, exx1, realise
from .errors import ValidationError
from .graph import EdgeBundle, ExplicitGraph, GraphView, Provenance, VertexId, WeightFamily

VERSION = 1
DERIVATION_ROUNDS = 8
GENERATOR = "interval-sequences/greedy-completion v1"
_NAMED = {"exx1": exx1, "backbone": backbone}


class KgdError(ValidationError):
    """A graph description that cannot be parsed or does not re-expand."""


def _vertex_to_json(v: VertexId) -> Any:
    return list(v) if isinstance(v, tuple) else v


def _vertex_from_json(data: Any) -> VertexId:
    if isinstance(data, list):
        return tuple(_vertex_from_json(x) for x in data)
    if isinstance(data, (str, int)):
        return data
    raise KgdError(f"vertex ids must be strings, integers or lists, got {data!r}")


def graph_to_document(g: GraphView) -> dict[str, Any]:
    named = (g.provenance.params or {}).get("name")
    if named in _NAMED:
        graph: dict[str, Any] = {"kind": "recipe", "theorem": named, "params": {}}
    elif isinstance(g, LayeredGraph) and g.provenance.theorem is not None:
        graph = {
            "kind": "recipe",
            "theorem": g.provenance.theorem.lower(),
            "params": g.provenance.params,
            "generator": GENERATOR,
            "derivation": derivation(g, DERIVATION_ROUNDS),
        }
    elif isinstance(g, ExplicitGraph):
        graph = {
            "kind": "explicit",
            "vertices": [
                {"id": _vertex_to_json(v), **({"label": g.labels[v]} if v in g.labels else {})} for v in g.order
            ],
            "bundles": [
                {"src": _vertex_to_json(b.src), "dst": _vertex_to_json(b.dst), "family": b.family.to_json()}
                for b in g.bundles()
            ],
        }
    else:
        raise KgdError("only explicit and recipe graphs can be serialized")
    document: dict[str, Any] = {"version": VERSION, "graph": graph}
    if g.declared_entropy is not None and graph["kind"] == "explicit":
        document["declared_entropy"] = g.declared_entropy
    return document


def dumps(g: GraphView) -> str:
    return json.dumps(graph_to_document(g), indent=2, sort_keys=True) + "\n"


def save(g: GraphView, path: str | Path) -> None:
    Path(path).write_text(dumps(g), encoding="utf-8")


def loads(text: str) -> GraphView:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise KgdError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return graph_from_document(document)


def load(path: str | Path) -> GraphView:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise KgdError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text)


def graph_from_document(document: Any) -> GraphView:
    if not isinstance(document, dict) or document.get("version") != VERSION:
        raise KgdError(f"expected an object with version {VERSION}")
    graph = document.get("graph")
    if not isinstance(graph, dict):
        raise KgdError("missing 'graph' object")
    kind = graph.get("kind")
    if kind == "explicit":
        return _explicit_from(graph, document)
    if kind == "recipe":
        return _recipe_from(graph)
    raise KgdError(f"unknown graph kind {kind!r}")


def _explicit_from(graph: dict[str, Any], document: dict[str, Any]) -> ExplicitGraph:
    try:
        vertices = [_vertex_from_json(item["id"]) for item in graph["vertices"]]
        labels = {_vertex_from_json(item["id"]): item["label"] for item in graph["vertices"] if "label" in item}
        bundles = [
            EdgeBundle(_vertex_from_json(item["src"]), _vertex_from_json(item["dst"]),
                       WeightFamily.from_json(item["family"]))
            for item in graph["bundles"]
        ]
    except (KeyError, TypeError) as exc:
        raise KgdError(f"malformed explicit graph: missing or invalid field {exc}") from None
    entropy = document.get("declared_entropy")
    return ExplicitGraph(vertices, bundles, labels, declared_entropy=entropy,
                         provenance=Provenance("explicit", None, graph.get("provenance")))


def _recipe_from(graph: dict[str, Any]) -> GraphView:
    theorem = str(graph.get("theorem", "")).lower()
    if theorem in _NAMED:
        return _NAMED[theorem]()
    params = graph.get("params")
    if not isinstance(params, dict):
        raise KgdError("recipe graphs need a 'params' object")
    try:
        recipe = ConstructionRecipe.from_json(params)
    except (KeyError, TypeError) as exc:
        raise KgdError(f"malformed recipe parameters: {exc}") from None
    if recipe.theorem.value.lower() != theorem:
        raise KgdError(f"theorem {theorem!r} does not match its parameters")
    g = realise(recipe)
    recorded = graph.get("derivation")
    if recorded is not None:
        fresh = json.loads(json.dumps(derivation(g, DERIVATION_ROUNDS)))
        if fresh != recorded:
            raise KgdError("the recorded derivation does not match the re-expanded recipe")
    return g
