"""Simple loops, recurrence, entropy and pressure.

A simple loop at ``v`` is a path from ``v`` back to ``v`` that meets ``v``
only at its two ends. Writing ``l^n`` for their weighted sum by length,
``A(beta)`` is recurrent exactly when ``sum_n l^n >= 1``. On a finite graph
the loop terms come from the taboo matrix ``T``, the restriction of
``A(beta)`` to the vertices other than ``v``: ``l^1 = A_vv`` and
``l^(n+2) = a T^n b`` with ``a`` the row and ``b`` the column of ``v``.

Constructed graphs instead carry a :class:`GaugeLoopCertificate`, which
knows the loop counts at the base vertex and their exact sum at the
construction base ``D = exp(-h)``.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .enclosure import INF, Enclosure, down, exp_neg, imatmul, up
from .errors import CertificateFailed, ValidationError
from .graph import (
    ExplicitGraph,
    GraphView,
    VertexId,
    hereditary_hull,
    is_strongly_connected,
    truncate,
)
from .series import DEFAULT_BUDGET, SeriesBudget, exact_matrix, weight_matrix


@dataclass(frozen=True)
class LoopSeries:
    """Weighted simple loop sums ``l^1 .. l^N`` at ``base`` and a bound on the rest."""

    base: VertexId
    terms: tuple[Enclosure, ...]
    tail: Enclosure

    @property
    def total(self) -> Enclosure:
        acc = Enclosure.zero()
        for term in self.terms:
            acc = acc + term
        return acc + self.tail


class Recurrence(enum.Enum):
    RECURRENT = "Recurrent"
    TRANSIENT = "Transient"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class RecurrenceClass:
    """Recurrence verdict with the loop sum enclosure behind it.

    ``critical`` marks a recurrent verdict whose enclosure lies within the
    certificate tolerance of one rather than certainly at or above it.
    """

    value: Recurrence
    loop_sum: Enclosure
    critical: bool = False

    def to_json(self) -> dict:
        return {"value": self.value.value, "loop_sum": self.loop_sum.to_json(), "critical": self.critical}


def verdict(loop_sum: Enclosure, tolerance: float) -> RecurrenceClass:
    """Loop sum at least one means recurrent, below one transient.

    An enclosure lying within ``tolerance`` of one below it is read as the
    critical case: ``beta`` itself is only known to float precision there.
    """
    if loop_sum.lo >= 1.0:
        return RecurrenceClass(Recurrence.RECURRENT, loop_sum)
    if loop_sum.lo >= 1.0 - tolerance and loop_sum.hi <= 1.0 + tolerance:
        return RecurrenceClass(Recurrence.RECURRENT, loop_sum, critical=True)
    if loop_sum.hi < 1.0:
        return RecurrenceClass(Recurrence.TRANSIENT, loop_sum)
    return RecurrenceClass(Recurrence.INDETERMINATE, loop_sum)


@dataclass
class GaugeLoopCertificate:
    """Simple loop counts at the base vertex of a constructed gauge graph.

    ``counts(n)`` is the number of simple loops of length ``n`` and
    ``total_at_base`` the exact value of ``sum_n counts(n) D^n``. For
    ``x <= D`` every omitted term satisfies ``counts(n) x^n <=
    (x/D)^(L+1) counts(n) D^n``, which bounds the tail by the exact
    remainder at ``D``. The float ``h`` is the entropy the recipe was
    asked for; a ``beta`` equal to it is read as the exact base ``D``.
    """

    base: VertexId
    D: Fraction
    h: float
    counts: Callable[[int], int]
    total_at_base: Fraction
    max_length: int = 4096
    _partials: list = field(default_factory=lambda: [Fraction(0)], repr=False)

    def partial_at_base(self, L: int) -> Fraction:
        while len(self._partials) <= L:
            n = len(self._partials)
            self._partials.append(self._partials[-1] + self.counts(n) * self.D**n)
        return self._partials[L]

    def remainder_at_base(self, L: int) -> Fraction:
        return self.total_at_base - self.partial_at_base(L)

    def without_loop(self) -> GaugeLoopCertificate:
        counts = self.counts
        if counts(1) < 1:
            raise ValidationError("no loop of length one remains at the base vertex")
        return GaugeLoopCertificate(
            self.base, self.D, self.h, lambda n: counts(n) - (1 if n == 1 else 0),
            self.total_at_base - self.D, self.max_length,
        )

    def _partial_at(self, x: Enclosure, L: int) -> Enclosure:
        acc = Enclosure.zero()
        power = Enclosure(1.0, 1.0)
        for n in range(1, L + 1):
            power = power * x
            count = self.counts(n)
            if count:
                acc = acc + power * Enclosure.point(count)
        return acc

    def loop_sum(self, beta: float, budget: SeriesBudget = DEFAULT_BUDGET) -> Enclosure:
        if beta == self.h:
            return Enclosure.point(self.total_at_base)
        x = exp_neg(beta)
        d_lo, d_hi = Enclosure.point(self.D).lo, Enclosure.point(self.D).hi
        L = 32
        while True:
            partial = self._partial_at(x, L)
            if x.hi < d_lo:
                ratio = Enclosure.point(Fraction(x.hi) / self.D).hi
                remainder = Enclosure.point(self.remainder_at_base(L)).hi
                tail = up(ratio ** (L + 1) * remainder) if ratio > 0 else 0.0
                total = Enclosure(partial.lo, up(partial.hi + up(tail)))
                if total.width <= budget.target_width or L >= self.max_length:
                    return total
            else:
                if partial.lo >= 1.0 or L >= self.max_length:
                    hi = INF
                    return Enclosure(partial.lo, hi)
            L *= 2

    def green(self, beta: float, budget: SeriesBudget = DEFAULT_BUDGET) -> Enclosure:
        total = self.loop_sum(beta, budget)
        if total.hi < 1.0:
            return 1.0 / (1.0 - total)
        return Enclosure(1.0, INF)


def _certificate(g: GraphView) -> GaugeLoopCertificate | None:
    return g.loop_certificate


def _explicit(g: GraphView) -> ExplicitGraph:
    if not isinstance(g, ExplicitGraph):
        raise ValidationError("operation needs a finite explicit graph or a constructed graph")
    return g


def _loop_region(g: ExplicitGraph, v: VertexId) -> list:
    """Vertices other than ``v`` lying on some simple loop at ``v``."""
    forward = hereditary_hull(g, v)
    back = {u: set() for u in g.vertices()}
    for b in g.bundles():
        back[b.dst].add(b.src)
    reach_v = {v}
    stack = [v]
    while stack:
        u = stack.pop()
        for p in back[u]:
            if p not in reach_v:
                reach_v.add(p)
                stack.append(p)
    return [u for u in g.vertices() if u != v and u in forward and u in reach_v]


def _left_certificate(t_lo: np.ndarray, t_hi: np.ndarray) -> tuple[np.ndarray, float] | None:
    m = t_lo.shape[0]
    if m == 0 or not np.isfinite(t_hi).all():
        return None
    mid = 0.5 * (t_lo + t_hi)
    try:
        y = np.linalg.solve((np.eye(m) - mid).T, np.ones(m))
    except np.linalg.LinAlgError:
        return None
    if not np.isfinite(y).all() or (y <= 0).any():
        return None
    _, yt_hi = imatmul(y[None, :], y[None, :], t_lo, t_hi)
    ratio = up(max(up(float(yt_hi[0, i]) / float(y[i])) for i in range(m)))
    if ratio >= 1.0:
        return None
    return y, ratio


def loop_series(
    g: GraphView,
    v: VertexId,
    beta: float,
    budget: SeriesBudget = DEFAULT_BUDGET,
    n_terms: int | None = None,
) -> LoopSeries:
    """Weighted simple loop sums at ``v`` with a certified tail when one exists.

    With ``n_terms`` the series is cut after that many terms; otherwise terms
    are added until the enclosure of the total meets the target width.
    """
    g = _explicit(g)
    if not g.has_vertex(v):
        raise ValidationError(f"unknown vertex {v!r}")
    a_lo, a_hi = weight_matrix(g, beta, budget)
    iv = g.index(v)
    region = [g.index(u) for u in _loop_region(g, v)]
    terms = [Enclosure(float(a_lo[iv, iv]), float(a_hi[iv, iv]))]
    if not region:
        return LoopSeries(v, tuple(terms[: n_terms or 1]) if n_terms != 0 else (), Enclosure.zero())
    t_lo, t_hi = a_lo[np.ix_(region, region)], a_hi[np.ix_(region, region)]
    row_lo, row_hi = a_lo[iv, region][None, :], a_hi[iv, region][None, :]
    col_lo, col_hi = a_lo[region, iv], a_hi[region, iv]
    cert = _left_certificate(t_lo, t_hi)
    limit = n_terms if n_terms is not None else budget.max_terms
    tail = Enclosure.unbounded_above()
    running = terms[0]
    while len(terms) < limit:
        lo, hi = imatmul(row_lo, row_hi, col_lo, col_hi)
        term = Enclosure(float(lo[0]), float(hi[0]))
        terms.append(term)
        running = running + term
        row_lo, row_hi = imatmul(row_lo, row_hi, t_lo, t_hi)
        tail = _loop_tail(row_hi, col_hi, cert)
        if n_terms is None and math.isfinite(tail.hi) and (running + tail).width <= budget.target_width:
            break
        if n_terms is None and cert is None and running.lo > 1.0:
            break
    if len(terms) > limit:
        terms = terms[:limit]
    if n_terms is not None:
        tail = _loop_tail(row_hi, col_hi, cert) if len(terms) > 1 else tail
    return LoopSeries(v, tuple(terms), tail)


def _loop_tail(row_hi: np.ndarray, col_hi: np.ndarray, cert) -> Enclosure:
    if cert is None or not np.isfinite(row_hi).all():
        return Enclosure.unbounded_above()
    y, ratio = cert
    scale = up(float(np.max(row_hi[0] / y)))
    yb = sum(float(a) * float(b) for a, b in zip(y, col_hi))
    yb = up(yb * (1 + 4 * len(y) * 2.0**-53))
    return Enclosure(0.0, up(up(scale * yb) / down(1.0 - ratio)))


def simple_loops(g: GraphView, v: VertexId, n: int, beta: float, budget: SeriesBudget = DEFAULT_BUDGET) -> Enclosure:
    """Enclosure of the weighted sum ``l^n_{vv}(beta)`` of simple loops of length ``n``."""
    if n < 1:
        raise ValidationError("loop length must be positive")
    cert = _certificate(g)
    if cert is not None and v == cert.base:
        return _power_term(cert.counts(n), beta, n)
    return loop_series(g, v, beta, budget, n_terms=n).terms[n - 1]


def _power_term(count: int, beta: float, n: int) -> Enclosure:
    x = exp_neg(beta)
    acc = Enclosure(1.0, 1.0)
    for _ in range(n):
        acc = acc * x
    return acc * Enclosure.point(count)


def exact_simple_loops(g: GraphView, v: VertexId, n_max: int, t: Fraction = Fraction(1)) -> list[Fraction]:
    """Exact ``l^n_{vv}`` for ``n = 1 .. n_max`` with ``exp(-beta)`` replaced by ``t``.

    With ``t = 1`` on a gauge graph these are the loop counts.
    """
    g = _explicit(g)
    m = exact_matrix(g, Fraction(t))
    iv = g.index(v)
    others = [g.index(u) for u in _loop_region(g, v)]
    loops = [m[iv][iv]]
    row = {j: m[iv][j] for j in others if m[iv][j]}
    for _ in range(2, n_max + 1):
        loops.append(sum((r * m[j][iv] for j, r in row.items()), Fraction(0)))
        nxt: dict[int, Fraction] = {}
        for i, r in row.items():
            for j in others:
                a = m[i][j]
                if a:
                    nxt[j] = nxt.get(j, Fraction(0)) + r * a
        row = nxt
    return loops[:n_max]


def renewal_check(g: GraphView, v: VertexId, t: Fraction, N: int) -> bool:
    """Exact check of the renewal sandwich at ``v`` for rational ``t`` and order ``N``."""
    from .series import exact_row_powers

    g = _explicit(g)
    if t <= 0 or N < 1:
        raise ValidationError("need t > 0 and N >= 1")
    t = Fraction(t)
    iv = g.index(v)
    rows = exact_row_powers(g, t, v, N * N)
    diag = [row[iv] for row in rows]
    low = sum(diag[1: N + 1], Fraction(0))
    high = sum(diag[1: N * N + 1], Fraction(0))
    loop_total = sum(exact_simple_loops(g, v, N, t), Fraction(0))
    middle = Fraction(0)
    power = Fraction(1)
    for _ in range(N):
        power *= loop_total
        middle += power
    return low <= middle <= high


def classify(
    g: GraphView,
    beta: float,
    budget: SeriesBudget = DEFAULT_BUDGET,
    base: VertexId | None = None,
) -> RecurrenceClass:
    """Recurrent, transient or undecided at ``beta``, from the simple loop sum."""
    cert = _certificate(g)
    if cert is not None:
        return verdict(cert.loop_sum(beta, budget), budget.tolerance)
    g = _explicit(g)
    v = g.base_vertex() if base is None else base
    return verdict(loop_series(g, v, beta, budget).total, budget.tolerance)


def spectral_radius(a_lo: np.ndarray, a_hi: np.ndarray, iterations: int = 200) -> Enclosure:
    """Collatz-Wielandt enclosure ``min (Ax)_i/x_i <= rho <= max (Ax)_i/x_i``."""
    n = a_lo.shape[0]
    if n == 0:
        return Enclosure.zero()
    if not np.isfinite(a_hi).all():
        lower = spectral_radius(a_lo, a_lo, iterations).lo
        return Enclosure(lower, INF)
    mid = 0.5 * (a_lo + a_hi)
    values, vectors = np.linalg.eig(mid)
    k = int(np.argmax(values.real))
    x = np.abs(vectors[:, k].real)
    x = x / x.max() if x.max() > 0 else np.ones(n)
    x = np.maximum(x, 1e-300)
    for _ in range(iterations):
        y = mid @ x + 1e-300
        x_new = y / y.max()
        if np.allclose(x_new, x, rtol=1e-15, atol=0):
            x = x_new
            break
        x = x_new
    x = np.maximum(x, 1e-300)
    lo_ax, _ = imatmul(a_lo, a_lo, x, x)
    _, hi_ax = imatmul(a_hi, a_hi, x, x)
    lower = min(down(float(lo_ax[i]) / float(x[i])) for i in range(n))
    upper = max(up(float(hi_ax[i]) / float(x[i])) for i in range(n))
    return Enclosure(max(lower, 0.0), upper)


def _count_matrix(g: ExplicitGraph) -> tuple[np.ndarray, np.ndarray]:
    n = g.vertex_count
    lo = np.zeros((n, n))
    hi = np.zeros((n, n))
    for b in g.bundles():
        i, j = g.index(b.src), g.index(b.dst)
        if b.family.is_infinite:
            hi[i, j] = INF
            lo[i, j] += 1.0
        else:
            lo[i, j] += b.family.count
            hi[i, j] += b.family.count
    return lo, hi


def gurevich_entropy(g: GraphView, budget: SeriesBudget = DEFAULT_BUDGET) -> Enclosure:
    """Enclosure of ``h(G)``; certified for finite graphs and constructed graphs."""
    cert = _certificate(g)
    if cert is not None:
        check_entropy_certificate(g, budget)
        return -(Enclosure.point(cert.D).log())
    if isinstance(g, ExplicitGraph):
        lo, hi = _count_matrix(g)
        return _log_rho(spectral_radius(lo, hi))
    cut = truncate(g, budget.depth, budget.width)
    lower = gurevich_entropy(cut, budget).lo
    return Enclosure(lower, INF)


def _log_rho(rho: Enclosure) -> Enclosure:
    if rho.hi == 0.0:
        raise ValidationError("the graph has no loops, so its entropy is minus infinity")
    return rho.log()


def check_entropy_certificate(g: GraphView, budget: SeriesBudget = DEFAULT_BUDGET) -> Fraction:
    """Verify that loop sums at ``exp(-h)``, with any removed loop restored, rise to one.

    Returns the certified partial sum.
    """
    cert = _certificate(g)
    if cert is None:
        raise CertificateFailed("the graph carries no loop certificate")
    restored = cert.total_at_base + (cert.D if cert.counts(1) == 0 else 0)
    if restored != 1:
        raise CertificateFailed(f"loop sum at exp(-h) is {float(restored)}, not 1")
    offset = cert.D if cert.counts(1) == 0 else Fraction(0)
    L = 16
    while L <= cert.max_length:
        partial = cert.partial_at_base(L) + offset
        if partial >= 1:
            raise CertificateFailed("partial loop sums reached one before the limit")
        if 1 - partial <= Fraction(budget.tolerance):
            return partial
        L *= 2
    raise CertificateFailed("partial loop sums did not reach the tolerance within the length budget")


class PressureMode(enum.Enum):
    GAUGE = "gauge"
    GENERAL = "general"


def pressure(g: GraphView, mode: PressureMode, beta: float, budget: SeriesBudget = DEFAULT_BUDGET) -> Enclosure:
    """Enclosure of the Gurevich pressure of ``-beta F``."""
    if mode is PressureMode.GAUGE:
        return gurevich_entropy(g, budget) - beta
    if isinstance(g, ExplicitGraph):
        lo, hi = weight_matrix(g, beta, budget)
        return _log_rho(spectral_radius(lo, hi))
    cut = truncate(g, budget.depth, budget.width)
    lo, hi = weight_matrix(cut, beta, budget)
    rho = spectral_radius(lo, lo)
    lower = rho.log().lo if rho.lo > 0 else -INF
    return Enclosure(lower, INF)


class RuetteKind(enum.Enum):
    RUETTE = "RuetteVertex"
    NOT_RUETTE = "NotRuette"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class RuetteStatus:
    kind: RuetteKind
    reason: str = ""


def ruette_check(g: GraphView, v: VertexId, budget: SeriesBudget = DEFAULT_BUDGET) -> RuetteStatus:
    cert = _certificate(g)
    if cert is not None:
        if v != cert.base:
            return RuetteStatus(RuetteKind.INDETERMINATE, "only the base vertex carries loop data")
        if cert.counts(1) != 1:
            return RuetteStatus(RuetteKind.NOT_RUETTE, f"{cert.counts(1)} loops of length one")
        try:
            check_entropy_certificate(g, budget)
        except CertificateFailed as exc:
            return RuetteStatus(RuetteKind.NOT_RUETTE, str(exc))
        return RuetteStatus(RuetteKind.RUETTE)
    g = _explicit(g)
    if not is_strongly_connected(g):
        return RuetteStatus(RuetteKind.NOT_RUETTE, "graph is not strongly connected")
    ones = exact_simple_loops(g, v, 1)[0]
    if ones != 1:
        return RuetteStatus(RuetteKind.NOT_RUETTE, f"{ones} loops of length one")
    region = [g.index(u) for u in _loop_region(g, v)]
    count_lo, count_hi = _count_matrix(g)
    entropy_rate = spectral_radius(count_lo, count_hi)
    if not region:
        return RuetteStatus(RuetteKind.NOT_RUETTE, "degenerate: the only simple loop has length one")
    taboo = spectral_radius(count_lo[np.ix_(region, region)], count_hi[np.ix_(region, region)])
    if taboo.hi < entropy_rate.lo:
        return RuetteStatus(RuetteKind.NOT_RUETTE, "simple loops grow more slowly than the entropy")
    return RuetteStatus(RuetteKind.INDETERMINATE, "loop growth rate not separated from the entropy")


def remove_ruette_loop(g: GraphView, v: VertexId, budget: SeriesBudget = DEFAULT_BUDGET) -> GraphView:
    """Remove the unique loop of length one at a Ruette vertex of a recurrent graph."""
    status = ruette_check(g, v, budget)
    if status.kind is not RuetteKind.RUETTE:
        raise ValidationError(f"{v!r} is not a verified Ruette vertex: {status.reason}")
    remover = getattr(g, "without_base_loop", None)
    if remover is None:
        raise ValidationError("this graph type cannot drop its base loop")
    reduced = remover()
    cert = _certificate(reduced)
    value = cert.loop_sum(cert.h, budget)
    if not value.hi < 1.0:
        raise CertificateFailed("loop sum after removal is not below one")
    return reduced


def critical_beta(
    g: GraphView,
    lower: float,
    upper: float,
    budget: SeriesBudget = DEFAULT_BUDGET,
    base: VertexId | None = None,
    width: float = 1e-9,
) -> Enclosure:
    """Enclosure of the ``beta`` at which the simple loop sum at ``base`` crosses one.

    The loop sum decreases in ``beta``; ``lower`` must certify a sum above
    one and ``upper`` a sum below one. Bisection stops at ``width`` or when
    the loop sum enclosure can no longer be separated from one.
    """

    def side(beta: float) -> int:
        total = classify(g, beta, budget, base).loop_sum
        if total.lo > 1.0:
            return -1
        if total.hi < 1.0:
            return 1
        return 0

    if side(lower) != -1 or side(upper) != 1:
        raise ValidationError("the bracket does not certify a crossing of one")
    while upper - lower > width:
        mid = 0.5 * (lower + upper)
        if mid in (lower, upper):
            break
        s = side(mid)
        if s == 0:
            break
        if s < 0:
            lower = mid
        else:
            upper = mid
    return Enclosure(lower, upper)
