"""Constructed graphs with prescribed exits, entropy and recurrence.

Infinite graphs are assembled from layers. Each layer owns some vertices,
adds edges out of and into vertices, and lists the vertices it adds in
numbered rounds. :class:`LayeredGraph` merges the layers round by round, so
truncations grow every part of the construction together.

Vertex ids are tuples: ``("v", n)`` for the backbone or the core vertex,
``("w", i)`` for star vertices, ``("t", tag, k)`` for attached exits,
``("g", tag, k, p)`` for the paths feeding an emitter attachment,
``("mu", j, p)`` for return paths and ``("x", m, p)`` for completion paths.
"""

from __future__ import annotations

import enum
import itertools
import math
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Any

from .errors import NotABareExit, ValidationError
from .graph import (
    EdgeBundle,
    ExitKind,
    ExitSpec,
    ExplicitGraph,
    GraphView,
    OutKind,
    Provenance,
    VertexId,
    WeightFamily,
    is_bare_exit,
)
from .sequences import (
    GreedyCompletion,
    IntervalSpec,
    SequenceTriple,
    interval_sequences,
    parse_interval,
)
from .spectrum import GaugeLoopCertificate, remove_ruette_loop

BASE: VertexId = ("v", 1)


def _edge(src: VertexId, dst: VertexId, count: int) -> EdgeBundle:
    return EdgeBundle(src, dst, WeightFamily.finite(count))


def _tagged(v: VertexId, tag: str, size: int) -> bool:
    return (
        isinstance(v, tuple)
        and len(v) == size
        and v[0] == tag
        and all(isinstance(x, int) and not isinstance(x, bool) and x >= 1 for x in v[1:])
    )


def _label(v: VertexId) -> str:
    if isinstance(v, tuple) and v and isinstance(v[0], str):
        return v[0] + ".".join(str(x) for x in v[1:])
    return str(v)


def _round_robin(streams: Sequence[Iterator[EdgeBundle]]) -> Iterator[EdgeBundle]:
    active = list(streams)
    while active:
        alive = []
        for stream in active:
            bundle = next(stream, None)
            if bundle is not None:
                yield bundle
                alive.append(stream)
        active = alive


class Layer:
    """Vertices and edges added by one construction step.

    ``round_vertices(r)`` lists the vertices first added in round ``r``;
    ``rounds`` is the last non-empty round or ``None`` when there is none.
    ``in_bundles(u)`` lists every edge this layer adds into ``u``, or is
    ``None`` when there are infinitely many.
    """

    rounds: int | None = 0

    def round_vertices(self, r: int) -> list[VertexId]:
        return []

    def owns(self, v: VertexId) -> bool:
        return False

    def out_bundles(self, u: VertexId) -> Iterator[EdgeBundle]:
        return iter(())

    def out_kind(self, u: VertexId) -> OutKind:
        return OutKind.FINITE

    def in_bundles(self, u: VertexId) -> list[EdgeBundle] | None:
        return []

    def label(self, v: VertexId) -> str:
        return _label(v)

    def stream(self) -> Iterator[VertexId]:
        rounds = itertools.count(1) if self.rounds is None else range(1, self.rounds + 1)
        for r in rounds:
            yield from self.round_vertices(r)

    def truncated_out(self, u: VertexId, keep: set, width: int) -> list[EdgeBundle]:
        return [b for b in itertools.islice(self.out_bundles(u), width) if b.dst in keep]


class ViewLayer(Layer):
    """An arbitrary graph used as the bottom layer."""

    def __init__(self, graph: GraphView) -> None:
        self.graph = graph
        self.rounds = graph.vertex_count
        self._stream = graph.vertices()
        self._seen: list[VertexId] = []

    def round_vertices(self, r: int) -> list[VertexId]:
        while len(self._seen) < r:
            v = next(self._stream, None)
            if v is None:
                return []
            self._seen.append(v)
        return [self._seen[r - 1]]

    def owns(self, v: VertexId) -> bool:
        return self.graph.has_vertex(v)

    def out_bundles(self, u: VertexId) -> Iterator[EdgeBundle]:
        return self.graph.out_bundles(u) if self.owns(u) else iter(())

    def out_kind(self, u: VertexId) -> OutKind:
        return self.graph.out_kind(u) if self.owns(u) else OutKind.FINITE

    def in_bundles(self, u: VertexId) -> list[EdgeBundle] | None:
        if not self.owns(u):
            return []
        sources = self.graph.in_sources(u)
        if sources is None:
            return None
        found = []
        for s in sources:
            between = self.graph.bundles_between(s, u)
            if between is None:
                return None
            found.extend(between)
        return found

    def label(self, v: VertexId) -> str:
        return self.graph.label(v)


class LayeredGraph(GraphView):
    """A graph assembled from :class:`Layer` objects."""

    def __init__(
        self,
        layers: Sequence[Layer],
        exits: Sequence[ExitSpec] = (),
        entropy: float | None = None,
        provenance: Provenance | None = None,
        certificate: GaugeLoopCertificate | None = None,
        base: VertexId = BASE,
        details: dict[str, Any] | None = None,
    ) -> None:
        self.layers = tuple(layers)
        self.declared_exits = tuple(exits)
        self.declared_entropy = entropy
        self.provenance = provenance or Provenance("recipe")
        self.loop_certificate = certificate
        self.base = base
        self.details = dict(details or {})

    def extended(self, layers: Sequence[Layer], **changes: Any) -> LayeredGraph:
        fields = {
            "exits": self.declared_exits,
            "entropy": self.declared_entropy,
            "provenance": self.provenance,
            "certificate": self.loop_certificate,
            "base": self.base,
            "details": self.details,
        }
        fields.update(changes)
        return LayeredGraph(self.layers + tuple(layers), **fields)

    def vertices(self) -> Iterator[VertexId]:
        streams = [layer.stream() for layer in self.layers]
        while streams:
            alive = []
            for stream in streams:
                v = next(stream, None)
                if v is not None:
                    yield v
                    alive.append(stream)
            streams = alive

    @property
    def vertex_count(self) -> int | None:
        if any(layer.rounds is None for layer in self.layers):
            return None
        return sum(1 for _ in self.vertices())

    def has_vertex(self, v: VertexId) -> bool:
        return any(layer.owns(v) for layer in self.layers)

    def _require(self, v: VertexId) -> None:
        if not self.has_vertex(v):
            raise ValidationError(f"unknown vertex {v!r}")

    def out_bundles(self, v: VertexId) -> Iterator[EdgeBundle]:
        self._require(v)
        return _round_robin([layer.out_bundles(v) for layer in self.layers])

    def out_kind(self, v: VertexId) -> OutKind:
        self._require(v)
        kinds = {layer.out_kind(v) for layer in self.layers}
        for kind in (OutKind.INFINITE, OutKind.UNKNOWN):
            if kind in kinds:
                return kind
        return OutKind.FINITE

    def truncated_out(self, v: VertexId, keep: set, width: int) -> list[EdgeBundle]:
        """Like :meth:`GraphView.truncated_out` with the width applied to each layer."""
        self._require(v)
        return [b for layer in self.layers for b in layer.truncated_out(v, keep, width)]

    def in_bundles(self, v: VertexId) -> list[EdgeBundle] | None:
        self._require(v)
        found: list[EdgeBundle] = []
        for layer in self.layers:
            part = layer.in_bundles(v)
            if part is None:
                return None
            found.extend(part)
        return found

    def in_sources(self, v: VertexId) -> frozenset | None:
        bundles = self.in_bundles(v)
        return None if bundles is None else frozenset(b.src for b in bundles)

    def bundles_between(self, v: VertexId, w: VertexId) -> list[EdgeBundle] | None:
        bundles = self.in_bundles(w)
        if bundles is not None:
            return [b for b in bundles if b.src == v]
        return super().bundles_between(v, w)

    def label(self, v: VertexId) -> str:
        for layer in self.layers:
            if layer.owns(v):
                return layer.label(v)
        return _label(v)

    def base_vertex(self) -> VertexId:
        return self.base

    def without_base_loop(self) -> LayeredGraph:
        """The same graph with the loop of length one at the base removed."""
        if self.loop_certificate is None:
            raise ValidationError("graph carries no loop certificate")
        layers = []
        for layer in self.layers:
            if getattr(layer, "include_loop", False):
                layer = replace(layer, include_loop=False)
            layers.append(layer)
        details = dict(self.details, stage="transient")
        return LayeredGraph(layers, self.declared_exits, self.declared_entropy, self.provenance,
                            self.loop_certificate.without_loop(), self.base, details)


def as_layered(g: GraphView) -> LayeredGraph:
    if isinstance(g, LayeredGraph):
        return g
    return LayeredGraph([ViewLayer(g)], g.declared_exits, g.declared_entropy, g.provenance,
                        g.loop_certificate, g.base_vertex())


class BackboneLayer(Layer):
    """The one-way infinite path ``v_1 -> v_2 -> ...``."""

    rounds = None

    def round_vertices(self, r: int) -> list[VertexId]:
        return [("v", r)]

    def owns(self, v: VertexId) -> bool:
        return _tagged(v, "v", 2)

    def out_bundles(self, u: VertexId) -> Iterator[EdgeBundle]:
        if self.owns(u):
            yield _edge(u, ("v", u[1] + 1), 1)

    def in_bundles(self, u: VertexId) -> list[EdgeBundle]:
        if self.owns(u) and u[1] >= 2:
            return [_edge(("v", u[1] - 1), u, 1)]
        return []

    def exit(self, name: str, interval: IntervalSpec | None = None) -> ExitSpec:
        return ExitSpec(
            name,
            vertex_at=lambda k: ("v", k),
            kind=ExitKind.BARE,
            step_weight=lambda k: 1,
            interval=interval,
            bare_from=1,
            index_of=lambda v: v[1] if _tagged(v, "v", 2) else None,
        )


class StarLayer(Layer):
    """The core vertex with one edge to each of ``count`` star vertices."""

    def __init__(self, count: int | None) -> None:
        self.count = count
        self.rounds = 1 if count is not None else None

    def round_vertices(self, r: int) -> list[VertexId]:
        if self.count is None:
            return [BASE, ("w", 1)] if r == 1 else [("w", r)]
        return [BASE] + [("w", i) for i in range(1, self.count + 1)] if r == 1 else []

    def owns(self, v: VertexId) -> bool:
        if v == BASE:
            return True
        return _tagged(v, "w", 2) and (self.count is None or v[1] <= self.count)

    def out_bundles(self, u: VertexId) -> Iterator[EdgeBundle]:
        if u != BASE:
            return
        targets = itertools.count(1) if self.count is None else range(1, self.count + 1)
        for i in targets:
            yield _edge(BASE, ("w", i), 1)

    def out_kind(self, u: VertexId) -> OutKind:
        return OutKind.INFINITE if u == BASE and self.count is None else OutKind.FINITE

    def in_bundles(self, u: VertexId) -> list[EdgeBundle]:
        if u != BASE and self.owns(u):
            return [_edge(BASE, u, 1)]
        return []


class RowFiniteAttachment(Layer):
    """A new exit ``t_1 = s_M, t_2, t_3, ...`` fed from a bare exit ``s``.

    ``a_i`` edges join ``t_i`` to ``t_(i+1)``, ``d_i`` edges join
    ``s_(M+i-1)`` to ``t_(2i+1)`` and ``b_i`` edges join ``s_(M-1+2i)`` to
    ``t_(i+1)``. Every vertex keeps finitely many outgoing edges.
    """

    rounds = None

    def __init__(self, tag: int, host: ExitSpec, M: int, triple: SequenceTriple) -> None:
        self.tag = tag
        self.host = host
        self.M = M
        self.triple = triple

    def t(self, k: int) -> VertexId:
        return self.host.vertex_at(self.M) if k == 1 else ("t", self.tag, k)

    def round_vertices(self, r: int) -> list[VertexId]:
        return [self.t(r + 1)]

    def owns(self, v: VertexId) -> bool:
        return _tagged(v, "t", 3) and v[1] == self.tag and v[2] >= 2

    def out_bundles(self, u: VertexId) -> Iterator[EdgeBundle]:
        tr = self.triple
        if self.owns(u):
            k = u[2]
            yield _edge(u, self.t(k + 1), tr.a(k))
            return
        n = self.host.index_of(u)
        if n is None or n < self.M:
            return
        j = n - self.M + 1
        if j == 1:
            yield _edge(u, self.t(2), tr.a(1))
        yield _edge(u, self.t(2 * j + 1), tr.d(j))
        if j % 2 == 0:
            yield _edge(u, self.t(j // 2 + 1), tr.b(j // 2))

    def in_bundles(self, u: VertexId) -> list[EdgeBundle]:
        if not self.owns(u):
            return []
        tr, k, s = self.triple, u[2], self.host.vertex_at
        found = [_edge(self.t(k - 1), u, tr.a(k - 1))]
        if k % 2 == 1:
            j = (k - 1) // 2
            found.append(_edge(s(self.M + j - 1), u, tr.d(j)))
        found.append(_edge(s(self.M - 1 + 2 * (k - 1)), u, tr.b(k - 1)))
        return found

    def new_exit(self, name: str, interval: IntervalSpec | None) -> ExitSpec:
        return ExitSpec(
            name,
            vertex_at=self.t,
            kind=ExitKind.ROW_FINITE,
            step_weight=self.triple.step_weight,
            triple=self.triple,
            interval=interval,
        )


class EmitterAttachment(Layer):
    """A new exit ``t_1 = v, t_2, ...`` that makes ``v`` an infinite emitter.

    ``a_i`` edges join ``t_i`` to ``t_(i+1)``, ``c_i`` edges join ``v`` to
    ``t_(i+1)``, and for ``i >= 2`` a path of length ``2i`` runs from ``v``
    to ``t_i`` with ``b_(i-1)`` parallel first edges.
    """

    rounds = None

    def __init__(self, tag: int, root: VertexId, triple: SequenceTriple) -> None:
        self.tag = tag
        self.root = root
        self.triple = triple

    def t(self, k: int) -> VertexId:
        return self.root if k == 1 else ("t", self.tag, k)

    def _path_vertex(self, k: int, p: int) -> VertexId:
        return self.t(k) if p == 2 * k else ("g", self.tag, k, p)

    def round_vertices(self, r: int) -> list[VertexId]:
        k = r + 1
        return [self.t(k)] + [("g", self.tag, k, p) for p in range(1, 2 * k)]

    def owns(self, v: VertexId) -> bool:
        if _tagged(v, "t", 3):
            return v[1] == self.tag and v[2] >= 2
        if _tagged(v, "g", 4):
            return v[1] == self.tag and v[2] >= 2 and v[3] < 2 * v[2]
        return False

    def out_bundles(self, u: VertexId) -> Iterator[EdgeBundle]:
        tr = self.triple
        if u == self.root:
            for j in itertools.count(1):
                if j == 1:
                    yield _edge(u, self.t(2), tr.a(1))
                yield _edge(u, self.t(j + 1), tr.c(j))
                yield _edge(u, self._path_vertex(j + 1, 1), tr.b(j))
        elif _tagged(u, "t", 3) and self.owns(u):
            yield _edge(u, self.t(u[2] + 1), tr.a(u[2]))
        elif self.owns(u):
            _, _, k, p = u
            yield _edge(u, self._path_vertex(k, p + 1), 1)

    def out_kind(self, u: VertexId) -> OutKind:
        return OutKind.INFINITE if u == self.root else OutKind.FINITE

    def in_bundles(self, u: VertexId) -> list[EdgeBundle]:
        if not self.owns(u):
            return []
        tr = self.triple
        if u[0] == "t":
            k = u[2]
            return [
                _edge(self.t(k - 1), u, tr.a(k - 1)),
                _edge(self.root, u, tr.c(k - 1)),
                _edge(("g", self.tag, k, 2 * k - 1), u, 1),
            ]
        _, _, k, p = u
        if p == 1:
            return [_edge(self.root, u, tr.b(k - 1))]
        return [_edge(("g", self.tag, k, p - 1), u, 1)]

    def step_weight(self, k: int) -> int:
        """``t(k)``; the first step carries both the ``a_1`` and the ``c_1`` edges."""
        if k == 1:
            return 1
        tr = self.triple
        return (tr.a(1) + tr.c(1)) * (tr.product(k - 1) // tr.a(1))

    def new_exit(self, name: str, interval: IntervalSpec | None) -> ExitSpec:
        return ExitSpec(
            name,
            vertex_at=self.t,
            kind=ExitKind.EMITTER,
            step_weight=self.step_weight,
            triple=self.triple,
            interval=interval,
        )


def _next_tag(g: LayeredGraph) -> int:
    return 1 + sum(isinstance(layer, (RowFiniteAttachment, EmitterAttachment)) for layer in g.layers)


def attach_exit_rowfinite(
    g0: GraphView,
    bare_exit: ExitSpec,
    M: int,
    triple: SequenceTriple,
    name: str | None = None,
) -> LayeredGraph:
    """Attach a row-finite exit whose first contact vertex is ``s_M``."""
    if M < 1:
        raise ValidationError("the first contact index must be at least 1")
    if bare_exit.index_of is None:
        raise NotABareExit("the exit does not expose the positions of its vertices")
    status = is_bare_exit(g0, bare_exit, horizon=M + 8)
    if not status.eventually_bare or status.from_index > M:
        raise NotABareExit(f"{bare_exit.name} is not bare beyond index {M}")
    base = as_layered(g0)
    layer = RowFiniteAttachment(_next_tag(base), bare_exit, M, triple)
    if g0.has_vertex(layer.t(2)):
        raise ValidationError("vertex ids of the new exit are already in use")
    new = layer.new_exit(name or f"exit-{len(base.declared_exits) + 1}", triple.interval)
    return base.extended([layer], exits=base.declared_exits + (new,))


def attach_exit_emitter(g0: GraphView, v: VertexId, triple: SequenceTriple, name: str | None = None) -> LayeredGraph:
    """Attach an exit starting at ``v`` through infinitely many edges out of ``v``."""
    if not g0.has_vertex(v):
        raise ValidationError(f"unknown vertex {v!r}")
    base = as_layered(g0)
    layer = EmitterAttachment(_next_tag(base), v, triple)
    if g0.has_vertex(layer.t(2)):
        raise ValidationError("vertex ids of the new exit are already in use")
    new = layer.new_exit(name or f"exit-{len(base.declared_exits) + 1}", triple.interval)
    return base.extended([layer], exits=base.declared_exits + (new,))


def _in_bundles(g: GraphView, u: VertexId) -> list[EdgeBundle] | None:
    if isinstance(g, LayeredGraph):
        return g.in_bundles(u)
    sources = g.in_sources(u)
    if sources is None:
        return None
    found = []
    for s in sources:
        between = g.bundles_between(s, u)
        if between is None:
            return None
        found.extend(between)
    return found


def _rational_sqrt_upper(D: Fraction) -> Fraction:
    guess = Fraction(math.sqrt(D))
    step = Fraction(1, 2**50)
    while guess * guess < D:
        guess += step
    return guess


def _least(start: int, holds: Callable[[int], bool], estimate: float) -> int:
    """Least ``n >= start`` with ``holds(n)`` for a predicate that stays true once true."""
    n = max(start, int(estimate) - 2) if math.isfinite(estimate) else start
    while n > start and holds(n - 1):
        n -= 1
    while not holds(n):
        n += 1
    return n


@dataclass(frozen=True)
class ScheduleEntry:
    index: int
    vertex: VertexId
    count: int
    longest: int
    length: int


class ReturnSchedule:
    """Lengths of the return paths from the attachment vertices to ``target``.

    ``count`` is the number of paths from ``target`` to ``w_i`` in ``H`` and
    ``longest`` the largest of their lengths. With ``sigma >= sqrt(D)``
    rational, ``n_1`` is the least length with ``count_1^2 D^n <= 1`` and
    ``sigma^n / (1 - sigma) < 1 - D``; each later ``n_(i+1)`` is the least
    length above ``n_i + longest_i`` with ``count_(i+1)^2 D^n <= 1``.
    """

    def __init__(
        self,
        H: GraphView,
        target: VertexId,
        w: Callable[[int], VertexId] | None,
        D: Fraction,
        index_of: Callable[[VertexId], int | None] | None = None,
    ) -> None:
        self.H = H
        self.target = target
        self.w = w
        self.D = Fraction(D)
        self.sigma = _rational_sqrt_upper(self.D)
        self.index_of = index_of or (lambda v: None)
        self.entries: list[ScheduleEntry] = []
        self._paths: dict[VertexId, dict[int, int]] = {}
        self._loops: dict[int, int] = {}
        self._powers = [Fraction(1)]

    @property
    def is_empty(self) -> bool:
        return self.w is None

    def _power(self, n: int) -> Fraction:
        while len(self._powers) <= n:
            self._powers.append(self._powers[-1] * self.D)
        return self._powers[n]

    def path_counts(self, u: VertexId) -> dict[int, int]:
        """Number of paths of each length from ``target`` to ``u`` in ``H``."""
        cache = self._paths
        stack = [u]
        expanded: set = set()
        while stack:
            x = stack[-1]
            if x in cache:
                stack.pop()
                continue
            if x == self.target:
                cache[x] = {0: 1}
                stack.pop()
                continue
            bundles = _in_bundles(self.H, x)
            if bundles is None:
                raise ValidationError(f"{x!r} has infinitely many incoming edges")
            missing = [b.src for b in bundles if b.src not in cache]
            if missing:
                if x in expanded:
                    raise ValidationError("the graph before return paths must be acyclic")
                expanded.add(x)
                stack.extend(missing)
                continue
            counts: dict[int, int] = {}
            for b in bundles:
                for length, number in cache[b.src].items():
                    counts[length + 1] = counts.get(length + 1, 0) + b.family.count * number
            cache[x] = counts
            stack.pop()
        return cache[u]

    def entry(self, i: int) -> ScheduleEntry:
        if self.w is None:
            raise IndexError(i)
        while len(self.entries) < i:
            self._extend()
        return self.entries[i - 1]

    def _extend(self) -> None:
        i = len(self.entries) + 1
        vertex = self.w(i)
        paths = self.path_counts(vertex)
        count = sum(paths.values())
        longest = max(paths) if paths else 0
        D = self.D
        log_d = -math.log(D)
        fits = lambda n: count * count * self._power(n) <= 1  # noqa: E731
        estimate = 2 * math.log(count) / log_d if count > 1 else 0.0
        if i == 1:
            sigma = self.sigma
            geometric = lambda n: sigma**n / (1 - sigma) < 1 - D  # noqa: E731
            bound = math.log(float((1 - D) * (1 - sigma))) / math.log(float(sigma))
            length = _least(1, lambda n: fits(n) and geometric(n), max(estimate, bound))
        else:
            prev = self.entries[-1]
            length = _least(prev.length + prev.longest + 1, fits, estimate)
        self.entries.append(ScheduleEntry(i, vertex, count, longest, length))

    def entries_upto(self, n: int) -> list[ScheduleEntry]:
        """All entries with return length at most ``n``."""
        if self.w is None:
            return []
        i = 1
        while self.entry(i).length <= n:
            i += 1
        return self.entries[: i - 1]

    def length_of(self, j: int) -> int:
        return self.entry(j).length

    def loop_count(self, n: int) -> int:
        """Number of loops of length ``n`` at ``target`` that use one return path."""
        if n not in self._loops:
            total = 0
            for e in self.entries_upto(n):
                total += self.path_counts(e.vertex).get(n - e.length, 0)
            self._loops[n] = total
        return self._loops[n]

    def tail(self, L: int) -> Fraction:
        """Upper bound of ``sum_{n > L} loop_count(n) D^n``."""
        if self.w is None:
            return Fraction(0)
        total = Fraction(0)
        for e in self.entries_upto(L):
            for length, number in self.path_counts(e.vertex).items():
                n = length + e.length
                if n > L:
                    total += number * self._power(n)
        sigma = self.sigma
        return total + sigma ** (L + 1) / (1 - sigma)

    def loop_sum_bound(self, L: int = 64) -> tuple[Fraction, Fraction]:
        """Enclosure of ``sum_n loop_count(n) D^n``."""
        head = sum((self.loop_count(n) * self._power(n) for n in range(1, L + 1)), Fraction(0))
        return head, head + self.tail(L)


def schedule_return_paths(
    H: GraphView,
    target: VertexId,
    w: Callable[[int], VertexId] | None,
    h: float,
    index_of: Callable[[VertexId], int | None] | None = None,
) -> ReturnSchedule:
    """Return-path schedule with base ``D = exp(-h)`` read as an exact rational."""
    return ReturnSchedule(H, target, w, _base_of(h), index_of)


class ReturnPathLayer(Layer):
    """Fresh paths ``mu_j`` of length ``n_j`` from ``w_j`` to the target."""

    rounds = None

    def __init__(self, schedule: ReturnSchedule) -> None:
        self.schedule = schedule
        if schedule.is_empty:
            self.rounds = 0

    def round_vertices(self, r: int) -> list[VertexId]:
        if self.schedule.is_empty:
            return []
        return [("mu", r, p) for p in range(1, self.schedule.length_of(r))]

    def owns(self, v: VertexId) -> bool:
        if self.schedule.is_empty or not _tagged(v, "mu", 3):
            return False
        return v[2] < self.schedule.length_of(v[1])

    def _step(self, j: int, p: int) -> VertexId:
        return self.schedule.target if p == self.schedule.length_of(j) else ("mu", j, p)

    def out_bundles(self, u: VertexId) -> Iterator[EdgeBundle]:
        if self.owns(u):
            yield _edge(u, self._step(u[1], u[2] + 1), 1)
            return
        j = self.schedule.index_of(u)
        if j is not None:
            yield _edge(u, self._step(j, 1), 1)

    def in_bundles(self, u: VertexId) -> list[EdgeBundle] | None:
        if u == self.schedule.target and not self.schedule.is_empty:
            return None
        if not self.owns(u):
            return []
        j, p = u[1], u[2]
        src = self.schedule.w(j) if p == 1 else ("mu", j, p - 1)
        return [_edge(src, u, 1)]


@dataclass(frozen=True)
class BackboneReturns(Layer):
    """``b_n - l^n`` parallel edges from ``v_n`` back to ``v_1``."""

    greedy: GreedyCompletion
    include_loop: bool = True

    def out_bundles(self, u: VertexId) -> Iterator[EdgeBundle]:
        if not _tagged(u, "v", 2):
            return
        n = u[1]
        if n == 1:
            if self.include_loop:
                yield _edge(u, BASE, 1)
            return
        count = self.greedy.c(n)
        if count:
            yield _edge(u, BASE, count)

    def in_bundles(self, u: VertexId) -> list[EdgeBundle] | None:
        return None if u == BASE else []


def _cantor_pair(i: int, j: int) -> int:
    return (i + j) * (i + j + 1) // 2 + j


def _cantor_unpair(z: int) -> tuple[int, int]:
    s = (math.isqrt(8 * z + 1) - 1) // 2
    j = z - s * (s + 1) // 2
    return s - j, j


@dataclass(frozen=True)
class Partition:
    """Round-robin split of the placement indices ``m = 1, 2, ...`` into classes.

    ``targets`` lists the vertex each class is routed from; ``None`` means
    the infinitely many star vertices ``("w", 1), ("w", 2), ...`` paired with
    placements by the Cantor pairing.
    """

    targets: tuple[VertexId, ...] | None

    def vertex_of(self, m: int) -> VertexId:
        if self.targets is None:
            return ("w", _cantor_unpair(m - 1)[0] + 1)
        return self.targets[(m - 1) % len(self.targets)]

    def members(self, vertex: VertexId) -> Iterator[int]:
        if self.targets is None:
            if not _tagged(vertex, "w", 2):
                return
            for j in itertools.count(0):
                yield _cantor_pair(vertex[1] - 1, j) + 1
            return
        if vertex not in self.targets:
            return
        first = self.targets.index(vertex) + 1
        yield from itertools.count(first, len(self.targets))

    def is_class(self, vertex: VertexId) -> bool:
        if self.targets is None:
            return _tagged(vertex, "w", 2)
        return vertex in self.targets


@dataclass(frozen=True)
class StarReturns(Layer):
    """For each placement ``(n_m, k_m)``, ``k_m`` parallel paths back to the core.

    A class routed from the core vertex gets loops of length ``n_m``; a class
    routed from a star vertex ``w`` gets paths of length ``n_m - 1`` from
    ``w``, which close into loops of length ``n_m`` through the edge to ``w``.
    The parallel paths are merged into one path whose first edge carries the
    multiplicity ``k_m``.
    """

    greedy: GreedyCompletion
    partition: Partition
    include_loop: bool = True
    rounds: int | None = None

    def _length(self, m: int) -> int:
        n = self.greedy.ensure(m)[m - 1].n
        return n if self.partition.vertex_of(m) == BASE else n - 1

    def _step(self, m: int, p: int) -> VertexId:
        return BASE if p == self._length(m) else ("x", m, p)

    def round_vertices(self, r: int) -> list[VertexId]:
        return [("x", r, p) for p in range(1, self._length(r))]

    def owns(self, v: VertexId) -> bool:
        return _tagged(v, "x", 3) and v[2] < self._length(v[1])

    def out_bundles(self, u: VertexId) -> Iterator[EdgeBundle]:
        if u == BASE and self.include_loop:
            yield _edge(u, BASE, 1)
        if self.owns(u):
            yield _edge(u, self._step(u[1], u[2] + 1), 1)
            return
        for m in self.partition.members(u):
            placement = self.greedy.ensure(m)[m - 1]
            yield _edge(u, self._step(m, 1), placement.k)

    def out_kind(self, u: VertexId) -> OutKind:
        return OutKind.INFINITE if self.partition.is_class(u) else OutKind.FINITE

    def truncated_out(self, u: VertexId, keep: set, width: int) -> list[EdgeBundle]:
        # Placements are read only for the path starts already in the cut.
        if not self.partition.is_class(u):
            return super().truncated_out(u, keep, width)
        starts = sorted(x[1] for x in keep if _tagged(x, "x", 3) and x[2] == 1)
        if BASE in keep and u != BASE and self._length(1) == 1:
            starts = [1] + starts
        found = [_edge(u, BASE, 1)] if u == BASE and self.include_loop else []
        members = [m for m in starts if self.partition.vertex_of(m) == u][:width]
        for m in members:
            found.append(_edge(u, self._step(m, 1), self.greedy.ensure(m)[m - 1].k))
        return found

    def in_bundles(self, u: VertexId) -> list[EdgeBundle] | None:
        if u == BASE:
            return None
        if not self.owns(u):
            return []
        m, p = u[1], u[2]
        if p == 1:
            k = self.greedy.ensure(m)[m - 1].k
            return [_edge(self.partition.vertex_of(m), u, k)]
        return [_edge(("x", m, p - 1), u, 1)]


class Theorem(enum.Enum):
    REV1 = "REV1"
    REV2 = "REV2"
    INTRO1 = "Intro1"
    INTRO = "Intro"

    @classmethod
    def parse(cls, text: str) -> Theorem:
        for member in cls:
            if member.value.lower() == text.strip().lower():
                return member
        raise ValidationError(f"unknown theorem {text!r}")

    @property
    def recurrent(self) -> bool:
        return self in (Theorem.REV1, Theorem.INTRO1)

    @property
    def row_finite(self) -> bool:
        return self in (Theorem.REV1, Theorem.REV2)


def _base_of(h: float) -> Fraction:
    if not (math.isfinite(h) and h > 0):
        raise ValidationError("the entropy must be a positive real number")
    D = Fraction(math.exp(-h))
    if not 0 < D < 1:
        raise ValidationError("exp(-h) is not representable strictly between 0 and 1")
    return D


@dataclass(frozen=True)
class ConstructionRecipe:
    """Parameters of one of the four construction pipelines.

    ``emitters`` is the number of infinite emitters requested from the Intro
    pipelines, with ``None`` standing for infinitely many.
    """

    theorem: Theorem
    h: float
    intervals: tuple[IntervalSpec, ...]
    emitters: int | None = 1

    @classmethod
    def parse(
        cls, theorem: str | Theorem, h: float, intervals: Sequence[str | IntervalSpec], emitters: int | None = 1
    ) -> ConstructionRecipe:
        symbols = {"h": float(h)}
        specs = tuple(i if isinstance(i, IntervalSpec) else parse_interval(i, symbols) for i in intervals)
        if not isinstance(theorem, Theorem):
            theorem = Theorem.parse(theorem)
        return cls(theorem, float(h), specs, emitters)

    def validate(self) -> None:
        _base_of(self.h)
        h = self.h
        for spec in self.intervals:
            if self.theorem.recurrent:
                if spec.lower < h or (spec.lower == h and spec.lower_closed):
                    raise ValidationError(f"{spec} is not contained in ]h, inf[")
            elif spec.lower < h:
                raise ValidationError(f"{spec} is not contained in [h, inf[")
        if self.theorem.row_finite:
            if self.maximal_index() is None:
                need = "]h, inf[" if self.theorem.recurrent else "[h, inf["
                raise ValidationError(f"{self.theorem.value} needs the interval {need} among the intervals")
        else:
            if self.emitters is not None and self.emitters < 1:
                raise ValidationError("the emitter count must be at least 1")

    def maximal_index(self) -> int | None:
        """Position of the interval realised by the bare backbone exit."""
        closed = not self.theorem.recurrent
        for i, spec in enumerate(self.intervals):
            if spec.lower == self.h and spec.lower_closed == closed and not spec.bounded:
                return i
        return None

    def to_json(self) -> dict[str, Any]:
        return {
            "theorem": self.theorem.value,
            "h": self.h,
            "intervals": [spec.to_json() for spec in self.intervals],
            "emitters": self.emitters,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> ConstructionRecipe:
        return cls(
            Theorem.parse(data["theorem"]),
            float(data["h"]),
            tuple(IntervalSpec.from_json(i) for i in data["intervals"]),
            _emitters_from_json(data.get("emitters", 1)),
        )


def _emitters_from_json(value: Any) -> int | None:
    if value is None or (isinstance(value, str) and value.strip().lower() in ("inf", "infinity")):
        return None
    return int(value)


def _round_robin_w(tags: int) -> tuple[Callable[[int], VertexId] | None, Callable[[VertexId], int | None]]:
    """Number the attachment vertices ``t_k``, ``k >= 2``, by tail index and then attachment."""
    if tags == 0:
        return None, lambda v: None

    def w(j: int) -> VertexId:
        return ("t", (j - 1) % tags + 1, (j - 1) // tags + 2)

    def index_of(v: VertexId) -> int | None:
        if _tagged(v, "t", 3) and v[1] <= tags and v[2] >= 2:
            return (v[2] - 2) * tags + v[1]
        return None

    return w, index_of


def _finish(
    recipe: ConstructionRecipe,
    layers: list[Layer],
    exits: list[ExitSpec],
    schedule: ReturnSchedule,
    completion: Callable[[GreedyCompletion], Layer],
    emitter_count: int | None = 0,
) -> tuple[LayeredGraph, LayeredGraph | None]:
    D = schedule.D
    greedy = GreedyCompletion(D, schedule.loop_count, schedule.tail)
    certificate = GaugeLoopCertificate(BASE, D, recipe.h, greedy.b, Fraction(1))
    provenance = Provenance("recipe", recipe.theorem.value, recipe.to_json())
    details = {"schedule": schedule, "greedy": greedy, "stage": "recurrent", "emitter_count": emitter_count}
    G = LayeredGraph(layers + [ReturnPathLayer(schedule), completion(greedy)], exits, recipe.h,
                     provenance, certificate, BASE, details)
    if recipe.theorem.recurrent:
        return G, None
    return G, remove_ruette_loop(G, BASE)


def _build_rev(recipe: ConstructionRecipe) -> tuple[LayeredGraph, LayeredGraph | None]:
    backbone = BackboneLayer()
    host = backbone.exit("backbone")
    layers: list[Layer] = [backbone]
    exits: list[ExitSpec] = []
    maximal = recipe.maximal_index()
    for position, spec in enumerate(recipe.intervals, 1):
        name = f"exit-{position}"
        if position - 1 == maximal:
            exits.append(backbone.exit(name, spec))
            continue
        tag = len(layers)
        attachment = RowFiniteAttachment(tag, host, tag, interval_sequences(spec))
        layers.append(attachment)
        exits.append(attachment.new_exit(name, spec))
    H = LayeredGraph(layers)
    w, index_of = _round_robin_w(len(layers) - 1)
    schedule = ReturnSchedule(H, BASE, w, _base_of(recipe.h), index_of)
    return _finish(recipe, layers, exits, schedule, lambda greedy: BackboneReturns(greedy))


def intro_partition(emitters: int | None, attachments: int) -> Partition:
    """Classes of the placement indices for the Intro pipelines.

    One emitter means every class is a loop at the core. Otherwise the
    ``N - 1`` star vertices share the placements and the core vertex is an
    emitter through its attachments; with no attachments the core joins
    the round robin so that it still emits infinitely many edges.
    """
    if emitters is None:
        return Partition(None)
    stars = tuple(("w", i) for i in range(1, emitters))
    if emitters == 1:
        return Partition((BASE,))
    if attachments == 0:
        return Partition((BASE,) + stars)
    return Partition(stars)


def _build_intro(recipe: ConstructionRecipe) -> tuple[LayeredGraph, LayeredGraph | None]:
    N = recipe.emitters
    layers: list[Layer] = [StarLayer(None if N is None else N - 1)]
    exits: list[ExitSpec] = []
    for position, spec in enumerate(recipe.intervals, 1):
        attachment = EmitterAttachment(position, BASE, interval_sequences(spec))
        layers.append(attachment)
        exits.append(attachment.new_exit(f"exit-{position}", spec))
    H = LayeredGraph(layers)
    w, index_of = _round_robin_w(len(layers) - 1)
    schedule = ReturnSchedule(H, BASE, w, _base_of(recipe.h), index_of)
    partition = intro_partition(N, len(layers) - 1)
    return _finish(recipe, layers, exits, schedule, lambda greedy: StarReturns(greedy, partition), N)


def build(recipe: ConstructionRecipe) -> tuple[LayeredGraph, LayeredGraph | None]:
    """Build the recurrent graph ``G`` and, for the transient pipelines, ``G'``.

    ``G'`` is ``G`` with the loop of length one at the base vertex removed.
    """
    recipe.validate()
    if recipe.theorem.row_finite:
        return _build_rev(recipe)
    return _build_intro(recipe)


def realise(recipe: ConstructionRecipe) -> LayeredGraph:
    """The graph the recipe's theorem asks for: ``G`` or ``G'``."""
    G, G_prime = build(recipe)
    return G if G_prime is None else G_prime


def backbone() -> LayeredGraph:
    """The bare path ``v_1 -> v_2 -> ...`` with its exit declared."""
    layer = BackboneLayer()
    return LayeredGraph([layer], [layer.exit("backbone")], provenance=Provenance("recipe", None, {"name": "backbone"}))


def exx1() -> ExplicitGraph:
    """Two vertices, each with edges of weight ``(i + 1)^-beta``, joined by two edges of ``F = 1``."""
    v, w = "v", "w"
    bundles = [
        EdgeBundle(v, v, WeightFamily.power_law(1)),
        EdgeBundle(w, w, WeightFamily.power_law(1)),
        EdgeBundle(v, w, WeightFamily.finite(1, 1.0)),
        EdgeBundle(w, v, WeightFamily.finite(1, 1.0)),
    ]
    return ExplicitGraph([v, w], bundles, provenance=Provenance("explicit", None, {"name": "exx1"}))


def derivation(g: LayeredGraph, rounds: int = 8) -> dict[str, Any]:
    """The deterministic choices behind a constructed graph, for the first ``rounds`` items."""
    record: dict[str, Any] = {"recipe": g.provenance.params, "stage": g.details.get("stage")}
    record["triples"] = {
        spec.name: spec.triple.prefix(rounds) for spec in g.declared_exits if spec.triple is not None
    }
    schedule = g.details.get("schedule")
    if schedule is not None and not schedule.is_empty:
        record["schedule"] = [
            {"vertex": list(e.vertex), "paths": e.count, "longest": e.longest, "length": e.length}
            for e in (schedule.entry(i) for i in range(1, rounds + 1))
        ]
    greedy = g.details.get("greedy")
    if greedy is not None:
        record["placements"] = [{"n": p.n, "k": p.k} for p in greedy.ensure(rounds)]
    return record
