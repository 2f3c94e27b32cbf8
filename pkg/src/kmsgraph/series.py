"""Certified sums over paths: matrix entries, matrix powers and Green functions.

For a graph with finitely many vertices the weighted adjacency matrix is
held as a pair of numpy arrays ``(lo, hi)`` and propagated with the
outward rounded products of :mod:`kmsgraph.enclosure`. Green function tails
are certified with a positive test vector ``x`` satisfying ``A x <= r x``
for some ``r < 1``; such an ``x`` exists exactly when the spectral radius is
below one, and ``x = (I - A)^-1 1`` is the natural candidate.

Rational mode replaces ``exp(-beta)`` by an exact rational ``t`` and runs in
:class:`fractions.Fraction` arithmetic.
"""

from __future__ import annotations

import enum
import itertools
from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .enclosure import INF, Enclosure, iadd, imatmul, up
from .errors import BudgetExhausted, ValidationError
from .graph import EdgeBundle, ExplicitGraph, GraphView, OutKind, VertexId, WeightFamily, truncate


class TailPolicy(enum.Enum):
    DECLARED_BOUND = "declared"
    GEOMETRIC_RATIO = "geometric"
    NONE = "none"


@dataclass(frozen=True)
class SeriesBudget:
    """Limits for series evaluation.

    ``depth`` and ``width`` size the truncations used on infinite graphs;
    ``tolerance`` is the slack allowed when a certificate asks for an
    equality such as a loop sum equal to one.
    """

    max_terms: int = 20_000
    target_width: float = 1e-9
    tail_policy: TailPolicy = TailPolicy.DECLARED_BOUND
    ratio: float | None = None
    depth: int = 200
    width: int = 64
    tolerance: float = 1e-6

    def __post_init__(self) -> None:
        if self.max_terms < 1 or self.depth < 1 or self.width < 1:
            raise ValidationError("budgets must be positive")
        if self.target_width <= 0 or self.tolerance <= 0:
            raise ValidationError("widths and tolerances must be positive")
        if self.tail_policy is TailPolicy.GEOMETRIC_RATIO and not (self.ratio is not None and 0 <= self.ratio < 1):
            raise ValidationError("a geometric tail policy needs a ratio in [0, 1)")


DEFAULT_BUDGET = SeriesBudget()


def family_weight(family: WeightFamily, beta: float, budget: SeriesBudget = DEFAULT_BUDGET) -> Enclosure:
    if family.is_infinite and budget.tail_policy is TailPolicy.NONE:
        head = family.prefix(budget.max_terms).total(beta)
        return Enclosure(head.lo, INF)
    return family.total(beta)


def _bundle_sum(bundles: Iterable[EdgeBundle], beta: float, budget: SeriesBudget) -> Enclosure:
    total = Enclosure.zero()
    for b in bundles:
        total = total + family_weight(b.family, beta, budget)
    return total


def entry(g: GraphView, beta: float, v: VertexId, w: VertexId, budget: SeriesBudget = DEFAULT_BUDGET) -> Enclosure:
    """Enclosure of ``A(beta)_{vw}``."""
    for u in (v, w):
        if not g.has_vertex(u):
            raise ValidationError(f"unknown vertex {u!r}")
    bundles = g.bundles_between(v, w)
    if bundles is not None:
        return _bundle_sum(bundles, beta, budget)
    seen = [b for b in itertools.islice(g.out_bundles(v), budget.max_terms) if b.dst == w]
    partial = _bundle_sum(seen, beta, budget)
    return Enclosure(partial.lo, INF)


def weight_matrix(g: ExplicitGraph, beta: float, budget: SeriesBudget = DEFAULT_BUDGET) -> tuple[np.ndarray, np.ndarray]:
    """Interval matrix ``(lo, hi)`` of ``A(beta)`` in the vertex order of ``g``."""
    n = g.vertex_count
    lo = np.zeros((n, n))
    hi = np.zeros((n, n))
    for b in g.bundles():
        i, j = g.index(b.src), g.index(b.dst)
        e = Enclosure(lo[i, j], hi[i, j]) + family_weight(b.family, beta, budget)
        lo[i, j], hi[i, j] = e.lo, e.hi
    return lo, hi


def exact_matrix(g: ExplicitGraph, t: Fraction) -> list[list[Fraction]]:
    """``A`` with ``exp(-beta F)`` replaced by ``t**F``; needs finite families and integer ``F``."""
    n = g.vertex_count
    m = [[Fraction(0)] * n for _ in range(n)]
    for b in g.bundles():
        m[g.index(b.src)][g.index(b.dst)] += b.family.exact_weight(Fraction(t))
    return m


def exact_row_powers(g: ExplicitGraph, t: Fraction, v: VertexId, n_max: int) -> list[list[Fraction]]:
    """Rows ``e_v A^n`` for ``n = 0 .. n_max`` in exact arithmetic."""
    m = exact_matrix(g, t)
    size = g.vertex_count
    row = [Fraction(0)] * size
    row[g.index(v)] = Fraction(1)
    rows = [row]
    for _ in range(n_max):
        nxt = [Fraction(0)] * size
        for i, r in enumerate(row):
            if r:
                for j, a in enumerate(m[i]):
                    if a:
                        nxt[j] += r * a
        row = nxt
        rows.append(row)
    return rows


def power_entry(
    g: GraphView,
    beta: float | None,
    n: int,
    v: VertexId,
    w: VertexId,
    budget: SeriesBudget = DEFAULT_BUDGET,
    t: Fraction | None = None,
) -> Enclosure | Fraction:
    """Enclosure of ``A(beta)^n_{vw}``, or the exact value when a rational ``t`` is given."""
    if n < 0:
        raise ValidationError("power must be non-negative")
    for u in (v, w):
        if not g.has_vertex(u):
            raise ValidationError(f"unknown vertex {u!r}")
    if t is not None:
        if not isinstance(g, ExplicitGraph):
            raise ValidationError("rational mode needs a finite explicit graph")
        return exact_row_powers(g, Fraction(t), v, n)[n][g.index(w)]
    if n == 0:
        return Enclosure(1.0, 1.0) if v == w else Enclosure.zero()
    if isinstance(g, ExplicitGraph):
        return _explicit_power(g, beta, n, v, w, budget)
    sliced, closed = reachable_slice(g, v, n, budget)
    value = _explicit_power(sliced, beta, n, v, w, budget) if sliced.has_vertex(w) else Enclosure.zero()
    return value if closed else Enclosure(value.lo, INF)


def _explicit_power(g: ExplicitGraph, beta: float, n: int, v: VertexId, w: VertexId, budget: SeriesBudget) -> Enclosure:
    a_lo, a_hi = weight_matrix(g, beta, budget)
    row_lo = np.zeros((1, g.vertex_count))
    row_lo[0, g.index(v)] = 1.0
    row_hi = row_lo.copy()
    for _ in range(n):
        row_lo, row_hi = imatmul(row_lo, row_hi, a_lo, a_hi)
    j = g.index(w)
    return Enclosure(float(row_lo[0, j]), float(row_hi[0, j]))


def reachable_slice(g: GraphView, v: VertexId, n: int, budget: SeriesBudget = DEFAULT_BUDGET) -> tuple[ExplicitGraph, bool]:
    """Finite subgraph holding every path of length ``n`` from ``v``.

    The flag is true when the slice is complete, i.e. every vertex reached in
    fewer than ``n`` steps had a finite, fully listed out-stream.
    """
    order = [v]
    seen = {v}
    bundles: list[EdgeBundle] = []
    closed = True
    frontier = deque([(v, 0)])
    while frontier:
        u, d = frontier.popleft()
        if d >= n:
            continue
        if g.out_kind(u) is OutKind.FINITE:
            out = list(g.out_bundles(u))
        else:
            closed = False
            out = [EdgeBundle(b.src, b.dst, b.family.prefix(budget.width))
                   for b in itertools.islice(g.out_bundles(u), budget.width)]
        for b in out:
            if b.family.is_infinite:
                closed = False
            bundles.append(b)
            if b.dst not in seen:
                if len(seen) >= budget.max_terms:
                    closed = False
                    bundles.pop()
                    continue
                seen.add(b.dst)
                order.append(b.dst)
                frontier.append((b.dst, d + 1))
    return ExplicitGraph(order, bundles), closed


def vertices_reaching(g: ExplicitGraph, targets: Iterable[VertexId]) -> set:
    back: dict = {u: set() for u in g.vertices()}
    for b in g.bundles():
        back[b.dst].add(b.src)
    seen = set(targets)
    stack = list(seen)
    while stack:
        u = stack.pop()
        for p in back[u]:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


@dataclass(frozen=True)
class ContractionCertificate:
    """A positive vector ``x`` and ``r < 1`` with ``A x <= r x`` entrywise."""

    x: np.ndarray
    ratio: float


def contraction_certificate(a_lo: np.ndarray, a_hi: np.ndarray) -> ContractionCertificate | None:
    if a_lo.shape[0] == 0:
        return ContractionCertificate(np.zeros(0), 0.0)
    if not np.isfinite(a_hi).all():
        return None
    mid = 0.5 * (a_lo + a_hi)
    n = mid.shape[0]
    try:
        x = np.linalg.solve(np.eye(n) - mid, np.ones(n))
    except np.linalg.LinAlgError:
        return None
    if not np.isfinite(x).all() or (x <= 0).any():
        return None
    _, ax_hi = imatmul(a_lo, a_hi, x, x)
    ratio = max(up(float(ax_hi[i]) / float(x[i])) for i in range(n))
    ratio = up(ratio)
    if ratio >= 1.0:
        return None
    return ContractionCertificate(x, ratio)


def green_apply(
    g: ExplicitGraph,
    beta: float,
    k: dict[VertexId, Enclosure],
    budget: SeriesBudget = DEFAULT_BUDGET,
) -> dict[VertexId, Enclosure]:
    """Enclose ``sum_n A(beta)^n k`` at every vertex of a finite graph.

    Only vertices that reach the support of ``k`` can carry a non-zero
    value, so the recursion runs on that set alone.
    """
    support = [u for u, val in k.items() if val.hi > 0]
    for u in k:
        if not g.has_vertex(u):
            raise ValidationError(f"unknown vertex {u!r}")
    result = {u: Enclosure.zero() for u in g.vertices()}
    if not support:
        return result
    region = [u for u in g.vertices() if u in vertices_reaching(g, support)]
    sub = g.subgraph(region)
    a_lo, a_hi = weight_matrix(sub, beta, budget)
    size = len(region)
    col_lo = np.zeros(size)
    col_hi = np.zeros(size)
    for u, val in k.items():
        if sub.has_vertex(u):
            col_lo[sub.index(u)] = val.lo
            col_hi[sub.index(u)] = val.hi
    cert = contraction_certificate(a_lo, a_hi) if budget.tail_policy is TailPolicy.DECLARED_BOUND else None
    acc_lo = np.zeros(size)
    acc_hi = np.zeros(size)
    tail = np.full(size, INF)
    for _ in range(budget.max_terms):
        acc_lo, acc_hi = iadd(acc_lo, acc_hi, col_lo, col_hi)
        col_lo, col_hi = imatmul(a_lo, a_hi, col_lo, col_hi)
        tail = _tail_bound(col_hi, cert, budget)
        if tail is not None and np.isfinite(acc_hi).all():
            width = (acc_hi + tail) - acc_lo
            if (width <= budget.target_width * np.maximum(1.0, acc_lo)).all():
                break
    else:
        if tail is not None and np.isfinite(tail).all():
            partial = _pack(region, acc_lo, acc_hi + tail)
            raise BudgetExhausted("green function did not reach the target width", partial)
    if tail is None:
        tail = np.full(size, INF)
    hi = np.nextafter(acc_hi + tail, INF)
    for u, lo_v, hi_v in zip(region, acc_lo, hi):
        result[u] = Enclosure(float(lo_v), float(hi_v))
    return result


def _tail_bound(col_hi: np.ndarray, cert: ContractionCertificate | None, budget: SeriesBudget) -> np.ndarray | None:
    if budget.tail_policy is TailPolicy.GEOMETRIC_RATIO:
        return np.nextafter(col_hi / (1.0 - budget.ratio), INF)
    if cert is None:
        return None
    if not np.isfinite(col_hi).all():
        return None
    scale = float(np.max(col_hi / cert.x)) if col_hi.size else 0.0
    scale = up(scale / (1.0 - cert.ratio))
    return np.nextafter(cert.x * scale, INF)


def _pack(order: list, lo: np.ndarray, hi: np.ndarray) -> dict[VertexId, Enclosure]:
    return {u: Enclosure(float(a), float(b)) for u, a, b in zip(order, lo, np.nextafter(hi, INF))}


def green_column(g: ExplicitGraph, beta: float, w: VertexId, budget: SeriesBudget = DEFAULT_BUDGET) -> dict[VertexId, Enclosure]:
    """``v -> sum_n A(beta)^n_{vw}`` for every vertex ``v``."""
    return green_apply(g, beta, {w: Enclosure(1.0, 1.0)}, budget)


def green(g: GraphView, beta: float, v: VertexId, w: VertexId, budget: SeriesBudget = DEFAULT_BUDGET) -> Enclosure:
    """Enclosure of ``sum_n A(beta)^n_{vw}``; ``hi`` is infinite unless a tail is certified."""
    for u in (v, w):
        if not g.has_vertex(u):
            raise ValidationError(f"unknown vertex {u!r}")
    cert = g.loop_certificate
    if cert is not None and v == w == cert.base:
        return cert.green(beta, budget)
    if isinstance(g, ExplicitGraph):
        return green_column(g, beta, w, budget)[v]
    cut = truncate(g, budget.depth, budget.width)
    if not (cut.has_vertex(v) and cut.has_vertex(w)):
        return Enclosure(0.0, INF)
    try:
        lower = green_column(cut, beta, w, budget)[v].lo
    except BudgetExhausted as exc:
        lower = exc.partial[v].lo if v in exc.partial else 0.0
    return Enclosure(lower, INF)
