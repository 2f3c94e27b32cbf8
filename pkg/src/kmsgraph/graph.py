"""Countable directed multigraphs with real edge weights.

A graph is exposed through :class:`GraphView`: a deterministic, possibly
infinite vertex enumeration and, for every vertex, a deterministic stream of
:class:`EdgeBundle` objects. Parallel edges are grouped into bundles whose
members share source and target; a bundle carries a :class:`WeightFamily`
describing how many edges it holds and their ``F`` values.

Finite graphs are :class:`ExplicitGraph` instances. Infinite graphs come
from deterministic recipes (see :mod:`kmsgraph.constructor`) and subclass
:class:`GraphView` directly. :func:`truncate` cuts any graph down to a
finite :class:`Truncation`.
"""

from __future__ import annotations

import enum
import itertools
import math
from collections.abc import Callable, Hashable, Iterable, Iterator, Sequence
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

import networkx as nx

from .enclosure import INF, Enclosure, down, up, weight_enclosure
from .errors import NotABareExit, UncertifiedFamily, ValidationError

VertexId = Hashable

_EULER_MACLAURIN_TERMS = 1000
_FSUM_SLACK = 8 * 2.0**-53


class FamilyKind(enum.Enum):
    FINITE = "finite"
    POWERLAW = "powerlaw"
    GEOMETRIC = "geometric"


@dataclass(frozen=True, slots=True)
class WeightFamily:
    """A family of parallel edges and their ``F`` values.

    ``FINITE`` families hold ``count`` edges sharing the value ``F``.
    ``POWERLAW`` members ``i = 1, 2, ...`` have ``F = log(i + offset)``.
    ``GEOMETRIC`` members have ``F + (i - 1) * step``.
    Power law and geometric families are infinite unless ``count`` is set,
    which is how truncations keep a finite prefix of them.
    """

    kind: FamilyKind
    count: int | None = None
    F: float = 1.0
    offset: int = 0
    step: float = 0.0

    def __post_init__(self) -> None:
        if self.kind is FamilyKind.FINITE and (self.count is None or self.count < 1):
            raise ValidationError("finite families need a positive count")
        if self.count is not None and self.count < 1:
            raise ValidationError("family prefixes must be non-empty")
        if self.kind is FamilyKind.POWERLAW and self.offset < 0:
            raise ValidationError("power law offset must be non-negative")
        if self.kind is FamilyKind.GEOMETRIC and self.step <= 0:
            raise ValidationError("geometric families need a positive step")

    @classmethod
    def finite(cls, count: int, F: float = 1.0) -> WeightFamily:
        return cls(FamilyKind.FINITE, count=int(count), F=float(F))

    @classmethod
    def power_law(cls, offset: int, count: int | None = None) -> WeightFamily:
        return cls(FamilyKind.POWERLAW, count=count, offset=int(offset))

    @classmethod
    def geometric(cls, F: float, step: float, count: int | None = None) -> WeightFamily:
        return cls(FamilyKind.GEOMETRIC, count=count, F=float(F), step=float(step))

    @property
    def is_infinite(self) -> bool:
        return self.count is None

    def member_F(self, i: int) -> float:
        if i < 1 or (self.count is not None and i > self.count):
            raise IndexError(i)
        if self.kind is FamilyKind.FINITE:
            return self.F
        if self.kind is FamilyKind.POWERLAW:
            return math.log(i + self.offset)
        return self.F + (i - 1) * self.step

    def prefix(self, n: int) -> WeightFamily:
        """First ``n`` members; finite families are kept whole."""
        if self.kind is FamilyKind.FINITE:
            return self
        count = n if self.count is None else min(n, self.count)
        return WeightFamily(self.kind, count=count, F=self.F, offset=self.offset, step=self.step)

    @property
    def convergence_threshold(self) -> float:
        """Infimum of the ``beta`` for which the full weighted sum is finite."""
        if not self.is_infinite:
            return -INF
        if self.kind is FamilyKind.POWERLAW:
            return 1.0
        return 0.0

    def tail_bound(self, beta: float, n: int) -> float:
        """Upper bound on the sum of ``exp(-beta F)`` over members after the ``n``-th."""
        if self.count is not None:
            return 0.0 if n >= self.count else _finite_tail(self, beta, n)
        if beta <= self.convergence_threshold:
            return INF
        if self.kind is FamilyKind.POWERLAW:
            start = n + self.offset
            if start <= 0:
                return up(1.0 + 1.0 / (beta - 1.0)) * (1 + _FSUM_SLACK)
            return up(up(math.pow(start, 1.0 - beta)) / down(beta - 1.0)) * (1 + _FSUM_SLACK)
        q = weight_enclosure(beta, self.step).hi
        head = weight_enclosure(beta, self.F + n * self.step).hi
        return up(head / down(1.0 - q))

    def total(self, beta: float) -> Enclosure:
        """Enclosure of the sum of ``exp(-beta F)`` over all members."""
        if self.kind is FamilyKind.FINITE:
            return weight_enclosure(beta, self.F) * float(self.count)
        if self.count is not None:
            return _finite_tail(self, beta, 0, enclosure=True)
        if self.kind is FamilyKind.POWERLAW:
            return hurwitz_enclosure(beta, self.offset + 1)
        if beta <= self.convergence_threshold:
            return Enclosure(0.0, INF)
        q = weight_enclosure(beta, self.step)
        head = weight_enclosure(beta, self.F)
        return head / (1.0 - q)

    def exact_weight(self, t: Fraction) -> Fraction:
        """Weight with ``exp(-beta)`` replaced by the rational ``t``; needs integer ``F``."""
        if self.is_infinite:
            raise UncertifiedFamily("exact weights need finite families")
        if self.kind is FamilyKind.FINITE:
            return self.count * _rational_power(t, self.F)
        return sum((_rational_power(t, self.member_F(i)) for i in range(1, self.count + 1)), Fraction(0))

    def to_json(self) -> dict[str, Any]:
        if self.kind is FamilyKind.FINITE:
            return {"kind": "finite", "count": self.count, "F": self.F}
        data: dict[str, Any] = {"kind": self.kind.value}
        if self.kind is FamilyKind.POWERLAW:
            data["offset"] = self.offset
        else:
            data.update(F=self.F, step=self.step)
        if self.count is not None:
            data["count"] = self.count
        return data

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> WeightFamily:
        kind = data.get("kind")
        if kind == "finite":
            return cls.finite(int(data["count"]), float(data.get("F", 1.0)))
        if kind == "powerlaw":
            return cls.power_law(int(data["offset"]), data.get("count"))
        if kind == "geometric":
            return cls.geometric(float(data["F"]), float(data["step"]), data.get("count"))
        raise ValidationError(f"unknown family kind {kind!r}")

    def describe(self) -> str:
        if self.kind is FamilyKind.FINITE:
            return str(self.count)
        size = "inf" if self.count is None else str(self.count)
        if self.kind is FamilyKind.POWERLAW:
            return f"log(i+{self.offset}) x{size}"
        return f"{self.F}+{self.step}(i-1) x{size}"


def _rational_power(t: Fraction, f_value: float) -> Fraction:
    if float(f_value) != int(f_value):
        raise UncertifiedFamily("exact weights need integer F values")
    return t ** int(f_value)


def _finite_tail(family: WeightFamily, beta: float, n: int, enclosure: bool = False):
    total = Enclosure.zero()
    for i in range(n + 1, family.count + 1):
        total = total + weight_enclosure(beta, family.member_F(i))
    return total if enclosure else total.hi


def hurwitz_enclosure(beta: float, start: int, terms: int = _EULER_MACLAURIN_TERMS) -> Enclosure:
    """Enclose ``sum_{j >= start} j**-beta`` for ``beta > 1``.

    A partial sum of ``terms`` values is closed with the Euler-Maclaurin
    formula through the third derivative; its remainder is bounded by
    ``|f'''(N)| / 720`` because ``x**-beta`` is completely monotone.
    """
    if start < 1:
        raise ValidationError("power law sums start at index 1 or later")
    cut = start + terms
    partial = math.fsum(math.pow(j, -beta) for j in range(start, cut))
    if beta <= 1.0:
        return Enclosure(max(0.0, partial * (1 - _FSUM_SLACK)), INF)
    lo = partial * (1 - _FSUM_SLACK)
    hi = partial * (1 + _FSUM_SLACK)
    n = float(cut)
    f = math.pow(n, -beta)
    integral = math.pow(n, 1.0 - beta) / (beta - 1.0)
    d1 = beta * math.pow(n, -beta - 1.0) / 12.0
    d3 = beta * (beta + 1.0) * (beta + 2.0) * math.pow(n, -beta - 3.0) / 720.0
    core = integral + 0.5 * f + d1
    slack = 16 * 2.0**-53 * core
    tail_lo = core - 2.0 * d3 - slack
    tail_hi = core + slack
    return Enclosure(down(lo + tail_lo), up(hi + tail_hi))


@dataclass(frozen=True, slots=True)
class EdgeBundle:
    src: VertexId
    dst: VertexId
    family: WeightFamily

    def to_json(self) -> dict[str, Any]:
        return {"src": self.src, "dst": self.dst, "family": self.family.to_json()}


class OutKind(enum.Enum):
    FINITE = "finite"
    INFINITE = "infinite"
    UNKNOWN = "unknown"


class VertexClass(enum.Enum):
    REGULAR = "Regular"
    SINK = "Sink"
    INFINITE_EMITTER = "InfiniteEmitter"
    UNKNOWN = "Unknown"


class ExitKind(enum.Enum):
    BARE = "bare"
    ROW_FINITE = "row_finite"
    EMITTER = "emitter"
    GENERIC = "generic"


@dataclass(frozen=True)
class ExitSpec:
    """An exit path ``t_1, t_2, ...`` together with its recipe metadata.

    ``vertex_at(k)`` returns ``t_k`` (1-based). For gauge graphs
    ``step_weight(k)`` returns the integer ``t(k) = A_{t1 t2} ... A_{t(k-1) tk}``.
    ``triple`` holds the sequence triple of an attached exit and
    ``bare_from`` declares that every ``t_(i+1)`` with ``i >= bare_from``
    has a unique predecessor, and ``index_of`` inverts ``vertex_at`` when
    the exit can host attachments.
    """

    name: str
    vertex_at: Callable[[int], VertexId]
    kind: ExitKind = ExitKind.GENERIC
    step_weight: Callable[[int], int] | None = None
    triple: Any = None
    interval: Any = None
    bare_from: int | None = None
    index_of: Callable[[VertexId], int | None] | None = None

    def vertices(self, k: int) -> list[VertexId]:
        return [self.vertex_at(i) for i in range(1, k + 1)]


@dataclass(frozen=True)
class Provenance:
    kind: str = "explicit"
    theorem: str | None = None
    params: dict[str, Any] | None = None


class GraphView:
    """Read-only view of a countable weighted multigraph.

    Subclasses implement :meth:`vertices`, :meth:`out_bundles` and, where
    known, :meth:`out_kind` and :meth:`in_sources`.
    """

    declared_exits: tuple[ExitSpec, ...] = ()
    declared_entropy: float | None = None
    provenance: Provenance = Provenance()
    loop_certificate: Any = None

    def vertices(self) -> Iterator[VertexId]:
        raise NotImplementedError

    @property
    def vertex_count(self) -> int | None:
        return None

    @property
    def is_finite(self) -> bool:
        return self.vertex_count is not None

    def has_vertex(self, v: VertexId) -> bool:
        raise NotImplementedError

    def out_bundles(self, v: VertexId) -> Iterator[EdgeBundle]:
        raise NotImplementedError

    def out_kind(self, v: VertexId) -> OutKind:
        return OutKind.UNKNOWN

    def in_sources(self, v: VertexId) -> frozenset | None:
        """Set of sources of edges into ``v``, or ``None`` when unknown or infinite."""
        return None

    def bundles_between(self, v: VertexId, w: VertexId) -> list[EdgeBundle] | None:
        """All bundles ``v -> w`` when that list is known to be complete, else ``None``."""
        if self.out_kind(v) is OutKind.FINITE:
            return [b for b in self.out_bundles(v) if b.dst == w]
        return None

    def label(self, v: VertexId) -> str:
        return str(v)

    def truncated_out(self, v: VertexId, keep: set, width: int) -> list[EdgeBundle]:
        """Bundles among the first ``width`` out of ``v`` whose target is in ``keep``."""
        return [b for b in itertools.islice(self.out_bundles(v), width) if b.dst in keep]

    def base_vertex(self) -> VertexId:
        return next(iter(self.vertices()))


class ExplicitGraph(GraphView):
    """A graph on finitely many vertices with finitely many bundles per vertex.

    Bundles may still hold infinite families, which makes their source an
    infinite emitter.
    """

    def __init__(
        self,
        vertices: Iterable[VertexId],
        bundles: Iterable[EdgeBundle],
        labels: dict[VertexId, str] | None = None,
        declared_exits: Sequence[ExitSpec] = (),
        declared_entropy: float | None = None,
        provenance: Provenance | None = None,
    ) -> None:
        self._order: list[VertexId] = list(vertices)
        self._index = {v: i for i, v in enumerate(self._order)}
        if len(self._index) != len(self._order):
            raise ValidationError("vertex ids must be unique")
        self._out: dict[VertexId, list[EdgeBundle]] = {v: [] for v in self._order}
        self._in: dict[VertexId, set] = {v: set() for v in self._order}
        for b in bundles:
            if b.src not in self._index or b.dst not in self._index:
                raise ValidationError(f"bundle {b.src!r}->{b.dst!r} references an unknown vertex")
            self._out[b.src].append(b)
            self._in[b.dst].add(b.src)
        self._labels = dict(labels or {})
        self.declared_exits = tuple(declared_exits)
        self.declared_entropy = declared_entropy
        self.provenance = provenance or Provenance()

    def vertices(self) -> Iterator[VertexId]:
        return iter(self._order)

    @property
    def order(self) -> list[VertexId]:
        return list(self._order)

    def index(self, v: VertexId) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise ValidationError(f"unknown vertex {v!r}") from None

    @property
    def vertex_count(self) -> int:
        return len(self._order)

    def has_vertex(self, v: VertexId) -> bool:
        return v in self._index

    def out_bundles(self, v: VertexId) -> Iterator[EdgeBundle]:
        self.index(v)
        return iter(self._out[v])

    def bundles(self) -> Iterator[EdgeBundle]:
        for v in self._order:
            yield from self._out[v]

    def bundles_between(self, v: VertexId, w: VertexId) -> list[EdgeBundle]:
        self.index(v)
        return [b for b in self._out[v] if b.dst == w]

    def out_kind(self, v: VertexId) -> OutKind:
        self.index(v)
        if any(b.family.is_infinite for b in self._out[v]):
            return OutKind.INFINITE
        return OutKind.FINITE

    def in_sources(self, v: VertexId) -> frozenset:
        self.index(v)
        return frozenset(self._in[v])

    def label(self, v: VertexId) -> str:
        return self._labels.get(v, str(v))

    @property
    def labels(self) -> dict[VertexId, str]:
        return dict(self._labels)

    def is_gauge(self) -> bool:
        return all(b.family.kind is FamilyKind.FINITE and b.family.F == 1.0 for b in self.bundles())

    def subgraph(self, keep: Iterable[VertexId]) -> ExplicitGraph:
        keep_set = set(keep)
        order = [v for v in self._order if v in keep_set]
        bundles = [b for b in self.bundles() if b.src in keep_set and b.dst in keep_set]
        return ExplicitGraph(order, bundles, {v: self.label(v) for v in order})

    def without_edge(self, v: VertexId, w: VertexId) -> ExplicitGraph:
        """Remove a single edge ``v -> w`` from the first finite bundle that has one."""
        bundles: list[EdgeBundle] = []
        removed = False
        for b in self.bundles():
            if not removed and b.src == v and b.dst == w and b.family.kind is FamilyKind.FINITE:
                removed = True
                if b.family.count > 1:
                    bundles.append(EdgeBundle(v, w, WeightFamily.finite(b.family.count - 1, b.family.F)))
                continue
            bundles.append(b)
        if not removed:
            raise ValidationError(f"no finite edge {v!r}->{w!r} to remove")
        return ExplicitGraph(self._order, bundles, self._labels, self.declared_exits,
                             self.declared_entropy, self.provenance)

    def to_networkx(self) -> nx.MultiDiGraph:
        graph = nx.MultiDiGraph()
        graph.add_nodes_from(self._order)
        for b in self.bundles():
            graph.add_edge(b.src, b.dst, family=b.family)
        return graph


class Truncation(ExplicitGraph):
    """The finite subgraph on the first ``depth`` vertices of ``parent``.

    Each vertex keeps the bundles among the first ``width`` entries of its
    out-stream whose target survives the vertex cut, and every infinite
    family is cut to its first ``width`` members.
    """

    def __init__(self, parent: GraphView, depth: int, width: int) -> None:
        self.parent = parent
        self.depth = depth
        self.width = width
        cut = list(itertools.islice(parent.vertices(), depth))
        keep = set(cut)
        bundles = []
        for v in cut:
            for b in parent.truncated_out(v, keep, width):
                bundles.append(EdgeBundle(b.src, b.dst, b.family.prefix(width)))
        super().__init__(cut, bundles, {v: parent.label(v) for v in cut},
                         provenance=Provenance("truncation", None, {"depth": depth, "width": width}))

    @property
    def vertex_cut(self) -> frozenset:
        return frozenset(self._order)


def truncate(g: GraphView, depth: int, width: int) -> Truncation:
    """Finite truncation; truncating a truncation composes the cuts."""
    if depth < 1 or width < 1:
        raise ValidationError("depth and width must be at least 1")
    if isinstance(g, Truncation):
        return Truncation(g.parent, min(depth, g.depth), min(width, g.width))
    return Truncation(g, depth, width)


def _require_vertex(g: GraphView, v: VertexId) -> None:
    if not g.has_vertex(v):
        raise ValidationError(f"unknown vertex {v!r}")


def classify_vertex(g: GraphView, v: VertexId, probe_budget: int = 1000) -> VertexClass:
    _require_vertex(g, v)
    kind = g.out_kind(v)
    if kind is OutKind.INFINITE:
        return VertexClass.INFINITE_EMITTER
    probe = list(itertools.islice(g.out_bundles(v), probe_budget + 1))
    if any(b.family.is_infinite for b in probe):
        return VertexClass.INFINITE_EMITTER
    if kind is OutKind.FINITE or len(probe) <= probe_budget:
        return VertexClass.SINK if not probe else VertexClass.REGULAR
    return VertexClass.UNKNOWN


def _require_finite(g: GraphView) -> ExplicitGraph:
    if not isinstance(g, ExplicitGraph):
        raise ValidationError("operation needs a finite explicit graph")
    return g


def _successors(g: ExplicitGraph, v: VertexId) -> set:
    return {b.dst for b in g.out_bundles(v)}


def v_infinity(g: ExplicitGraph) -> set:
    """Sinks and infinite emitters of a finite graph."""
    return {v for v in g.vertices()
            if classify_vertex(g, v) in (VertexClass.SINK, VertexClass.INFINITE_EMITTER)}


def is_hereditary(g: ExplicitGraph, H: Iterable[VertexId]) -> bool:
    H = set(H)
    return all(_successors(g, v) <= H for v in H)


def saturation_closure(g: GraphView, H: Iterable[VertexId]) -> set:
    """Least hereditary and saturated superset of a hereditary set ``H``."""
    g = _require_finite(g)
    current = set(H)
    for v in current:
        _require_vertex(g, v)
    if not is_hereditary(g, current):
        raise ValidationError("the input set is not hereditary")
    exempt = v_infinity(g)
    for _ in range(g.vertex_count + 1):
        grown = current | {
            v for v in g.vertices()
            if v not in current and v not in exempt and _successors(g, v) <= current
        }
        if grown == current:
            return current
        current = grown
    return current


def hereditary_hull(g: ExplicitGraph, v: VertexId) -> set:
    seen = {v}
    stack = [v]
    while stack:
        u = stack.pop()
        for w in _successors(g, u):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def is_cofinal(g: GraphView) -> bool:
    g = _require_finite(g)
    everything = set(g.vertices())
    return all(saturation_closure(g, hereditary_hull(g, v)) == everything for v in g.vertices())


def loop_vertices(g: ExplicitGraph) -> set:
    graph = nx.DiGraph()
    graph.add_nodes_from(g.vertices())
    graph.add_edges_from((b.src, b.dst) for b in g.bundles())
    on_loops: set = set()
    for component in nx.strongly_connected_components(graph):
        if len(component) > 1:
            on_loops |= component
    on_loops |= {b.src for b in g.bundles() if b.src == b.dst}
    return on_loops


def is_strongly_connected(g: ExplicitGraph) -> bool:
    graph = nx.DiGraph()
    graph.add_nodes_from(g.vertices())
    graph.add_edges_from((b.src, b.dst) for b in g.bundles())
    return g.vertex_count > 0 and nx.is_strongly_connected(graph)


def nonwandering_subgraph(g: GraphView) -> ExplicitGraph:
    """Subgraph on the vertices that lie on a loop.

    For cofinal input the result is checked to be strongly connected and
    hereditary; for other input no such claim is made.
    """
    g = _require_finite(g)
    keep = loop_vertices(g)
    sub = g.subgraph(keep)
    if keep and is_cofinal(g):
        if not is_strongly_connected(sub) or not is_hereditary(g, keep):
            raise AssertionError("non-wandering part of a cofinal graph must be strongly connected")
    return sub


class BareKind(enum.Enum):
    BARE = "Bare"
    EVENTUALLY_BARE = "EventuallyBare"
    NOT_BARE_WITHIN = "NotBareWithin"


@dataclass(frozen=True)
class BareStatus:
    kind: BareKind
    from_index: int | None
    horizon: int
    declared: bool = False

    @property
    def eventually_bare(self) -> bool:
        return self.kind is not BareKind.NOT_BARE_WITHIN


def _has_edge(g: GraphView, v: VertexId, w: VertexId, probe_budget: int) -> bool:
    sources = g.in_sources(w)
    if sources is not None:
        return v in sources
    return any(b.dst == w for b in itertools.islice(g.out_bundles(v), probe_budget))


def is_bare_exit(g: GraphView, t: ExitSpec, horizon: int, probe_budget: int = 10_000) -> BareStatus:
    """Check ``#s(r^-1(t_(i+1))) = 1`` for ``i = 1 .. horizon``."""
    if horizon < 1:
        raise ValidationError("horizon must be positive")
    path = t.vertices(horizon + 1)
    for v in path:
        _require_vertex(g, v)
    for v, w in zip(path, path[1:]):
        if not _has_edge(g, v, w, probe_budget):
            raise NotABareExit(f"{v!r}->{w!r} is not an edge, so the sequence is not a path")
    last_failure = 0
    for i in range(1, horizon + 1):
        sources = g.in_sources(path[i])
        if sources is None or len(sources) != 1:
            last_failure = i
    declared = t.bare_from is not None
    if last_failure == 0:
        return BareStatus(BareKind.BARE, 1, horizon, declared and t.bare_from <= 1)
    if last_failure < horizon:
        start = last_failure + 1
        return BareStatus(BareKind.EVENTUALLY_BARE, start, horizon, declared and t.bare_from <= start)
    return BareStatus(BareKind.NOT_BARE_WITHIN, None, horizon, False)


def to_dot(g: GraphView, name: str = "G") -> str:
    """DOT text for a finite graph, with bundle multiplicities as edge labels."""
    g = _require_finite(g)
    ids = {v: f"n{i}" for i, v in enumerate(g.vertices())}
    lines = [f"digraph {name} {{"]
    for v, node in ids.items():
        lines.append(f'  {node} [label="{_escape(g.label(v))}"];')
    for b in g.bundles():
        lines.append(f'  {ids[b.src]} -> {ids[b.dst]} [label="{_escape(b.family.describe())}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')

