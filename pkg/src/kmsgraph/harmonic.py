"""Harmonic and almost harmonic vectors, exits and the KMS report.

A vector ``psi`` on the vertices is almost ``A(beta)``-harmonic when
``sum_w A(beta)_{vw} psi_w <= psi_v`` everywhere, with equality away from
sinks and infinite emitters. Gauge invariant ``beta``-KMS weights are read
off such vectors: boundary rays come from summable sinks and infinite
emitters, harmonic rays from the unique recurrent solution or from
summable exits.

Values are enclosures. A vector with ``certified = False`` carries honest
but possibly loose enclosures (often ``[lo, inf]``) in ``values`` and
numerical approximations in ``estimates``.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .enclosure import INF, Enclosure, exp_neg, imatmul, weight_enclosure
from .errors import (
    BudgetExhausted,
    CertificateFailed,
    IncompleteExitData,
    InsufficientSupport,
    KmsGraphError,
    NotHarmonic,
    NotSummable,
    NotSuperHarmonic,
    SummabilityUndecided,
    ValidationError,
)
from .graph import (
    ExitKind,
    ExitSpec,
    ExplicitGraph,
    GraphView,
    OutKind,
    VertexClass,
    VertexId,
    classify_vertex,
    is_cofinal,
    loop_vertices,
    truncate,
    v_infinity,
)
from .sequences import Membership, j_membership
from .series import DEFAULT_BUDGET, SeriesBudget, family_weight, green, green_apply, green_column, weight_matrix
from .spectrum import PressureMode, Recurrence, RecurrenceClass, classify, pressure
from .verify import ExitVariant, closed_form_limits, closed_form_xy

UNIQUE_RECURRENT = "UniqueRecurrent"


def vertex_key(v: VertexId) -> str:
    if isinstance(v, tuple):
        return ":".join(str(part) for part in v)
    return str(v)


@dataclass(frozen=True)
class HarmonicVector:
    """Non-negative vector materialized on ``horizon``.

    ``extension_rule`` supplies values beyond the horizon when a closed
    form is known. ``normalized_at`` names the vertex whose value was scaled
    to one, if any.
    """

    values: dict[VertexId, Enclosure]
    horizon: tuple[VertexId, ...]
    extension_rule: Callable[[VertexId], Enclosure] | None = None
    certified: bool = True
    estimates: dict[VertexId, float] | None = None
    normalized_at: VertexId | None = None
    note: str = ""

    def __post_init__(self) -> None:
        for v, value in self.values.items():
            if value.hi < 0:
                raise ValidationError(f"negative value at {v!r}")

    def __getitem__(self, v: VertexId) -> Enclosure:
        if v in self.values:
            return self.values[v]
        if self.extension_rule is not None:
            return self.extension_rule(v)
        raise InsufficientSupport(f"vector not materialized at {v!r}")

    def covers(self, v: VertexId) -> bool:
        return v in self.values or self.extension_rule is not None

    def normalized(self, v: VertexId) -> HarmonicVector:
        """The vector scaled so that its value at ``v`` is one.

        Needs a finite, strictly positive value at ``v``; estimates are
        scaled by the estimate at ``v``.
        """
        scale = self[v]
        if not (scale.lo > 0 and math.isfinite(scale.hi)):
            raise ValidationError(f"cannot normalize at {v!r}: value {scale}")
        values = {u: (val / scale).clamp_nonnegative() for u, val in self.values.items()}
        if v in values:
            values[v] = Enclosure(1.0, 1.0)
        estimates = None
        if self.estimates is not None and self.estimates.get(v):
            base = self.estimates[v]
            estimates = {u: x / base for u, x in self.estimates.items()}
        return HarmonicVector(values, self.horizon, None, self.certified, estimates, v, self.note)

    def to_json(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "values": {vertex_key(v): val.to_json() for v, val in self.values.items()},
            "horizon": [vertex_key(v) for v in self.horizon],
            "certified": self.certified,
        }
        if self.estimates is not None:
            data["estimates"] = {vertex_key(v): x for v, x in self.estimates.items()}
        if self.normalized_at is not None:
            data["normalized_at"] = vertex_key(self.normalized_at)
        if self.note:
            data["note"] = self.note
        return data


def _in_v_infinity(g: GraphView, v: VertexId) -> bool:
    return classify_vertex(g, v) in (VertexClass.SINK, VertexClass.INFINITE_EMITTER)


def _out_sum(g: GraphView, beta: float, v: VertexId, psi: HarmonicVector, budget: SeriesBudget) -> Enclosure:
    """Enclosure of ``sum_w A(beta)_{vw} psi_w``.

    Infinitely many out-bundles give a partial sum with an infinite upper end.
    """
    total = Enclosure.zero()
    if isinstance(g, ExplicitGraph) or g.out_kind(v) is OutKind.FINITE:
        for b in g.out_bundles(v):
            total = total + family_weight(b.family, beta, budget) * psi[b.dst]
        return total
    for b in g.truncated_out(v, set(psi.values), budget.width):
        total = total + family_weight(b.family, beta, budget) * psi[b.dst]
    return Enclosure(total.lo, INF)


class HarmonicKind(enum.Enum):
    HARMONIC = "Harmonic"
    ALMOST_HARMONIC = "AlmostHarmonic"
    NOT_ALMOST_HARMONIC = "NotAlmostHarmonic"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class HarmonicCheck:
    kind: HarmonicKind
    defects: dict[VertexId, Enclosure]
    defect_support: tuple[VertexId, ...] = ()
    witness: VertexId | None = None
    undecided: tuple[VertexId, ...] = ()

    @property
    def max_defect(self) -> float:
        return max((max(abs(d.lo), abs(d.hi)) for d in self.defects.values()), default=0.0)


def almost_harmonic_check(
    g: GraphView,
    beta: float,
    psi: HarmonicVector,
    horizon: Iterable[VertexId] | None = None,
    budget: SeriesBudget = DEFAULT_BUDGET,
    tolerance: float = 1e-9,
) -> HarmonicCheck:
    """Classify ``psi`` on ``horizon`` (default: its own horizon).

    The defect ``psi_v - sum_w A_{vw} psi_w`` counts as zero when its
    enclosure lies within ``tolerance * max(1, psi_v)`` of zero and as
    strictly positive or negative when it clears that margin.
    """
    vertices = tuple(psi.horizon if horizon is None else horizon)
    defects: dict[VertexId, Enclosure] = {}
    support: list[VertexId] = []
    undecided: list[VertexId] = []
    witness = None
    for v in vertices:
        value = psi[v]
        d = value - _out_sum(g, beta, v, psi, budget)
        defects[v] = d
        if not math.isfinite(d.width):
            undecided.append(v)
            continue
        margin = tolerance * max(1.0, value.hi)
        if d.hi < -margin:
            witness = v
            break
        if -margin <= d.lo and d.hi <= margin:
            continue
        if d.lo > margin:
            if _in_v_infinity(g, v):
                support.append(v)
                continue
            witness = v
            break
        undecided.append(v)
    if witness is not None:
        return HarmonicCheck(HarmonicKind.NOT_ALMOST_HARMONIC, defects, tuple(support), witness, tuple(undecided))
    if undecided:
        return HarmonicCheck(HarmonicKind.INDETERMINATE, defects, tuple(support), None, tuple(undecided))
    kind = HarmonicKind.ALMOST_HARMONIC if support else HarmonicKind.HARMONIC
    return HarmonicCheck(kind, defects, tuple(support))


@dataclass(frozen=True)
class RieszParts:
    """``psi = h + sum_n A^n k`` with ``h`` harmonic and ``k`` the defect."""

    h: HarmonicVector
    k: HarmonicVector
    potential: dict[VertexId, Enclosure]
    residual: Enclosure
    harmonic_defect: float

    @property
    def residual_width(self) -> float:
        return self.residual.width


def _require_finite(g: GraphView) -> ExplicitGraph:
    if not isinstance(g, ExplicitGraph):
        raise ValidationError("this operation needs a finite explicit graph")
    return g


def riesz_decompose(
    g: GraphView,
    beta: float,
    psi: HarmonicVector,
    budget: SeriesBudget = DEFAULT_BUDGET,
    tolerance: float = 1e-9,
) -> RieszParts:
    """Split a super-harmonic vector on a finite graph into harmonic part and potential."""
    g = _require_finite(g)
    order = g.order
    k: dict[VertexId, Enclosure] = {}
    for v in order:
        value = psi[v]
        d = value - _out_sum(g, beta, v, psi, budget)
        margin = tolerance * max(1.0, value.hi)
        if d.hi < -margin:
            raise NotSuperHarmonic(f"sum of A psi exceeds psi at {v!r}", witness=v)
        # a defect indistinguishable from zero stays out of the potential's support
        k[v] = Enclosure.zero() if -margin <= d.lo and d.hi <= margin else d.clamp_nonnegative()
    potential = green_apply(g, beta, k, budget)
    h: dict[VertexId, Enclosure] = {}
    for v in order:
        if not math.isfinite(potential[v].hi):
            raise BudgetExhausted("the potential of the defect is not certified", partial=potential)
        diff = psi[v] - potential[v]
        if diff.hi < -tolerance * max(1.0, psi[v].hi):
            raise NotSuperHarmonic(f"potential exceeds psi at {v!r}", witness=v)
        h[v] = diff.clamp_nonnegative()
    h_vec = HarmonicVector(h, tuple(order))
    check = almost_harmonic_check(g, beta, h_vec, budget=budget, tolerance=tolerance)
    if check.kind is not HarmonicKind.HARMONIC:
        raise CertificateFailed(f"harmonic part failed its check: {check.kind.value}")
    residual = Enclosure.zero()
    for v in order:
        r = h[v] + potential[v] - psi[v]
        residual = Enclosure(min(residual.lo, r.lo), max(residual.hi, r.hi))
    return RieszParts(h_vec, HarmonicVector(k, tuple(order)), potential, residual, check.max_defect)


def is_constructed(g: GraphView) -> bool:
    """Graphs with a loop certificate at a base vertex.

    Such graphs are strongly connected and every loop passes through the
    base vertex, which the bounds below rely on.
    """
    return g.loop_certificate is not None and not isinstance(g, ExplicitGraph)


def loop_base(g: GraphView) -> VertexId:
    """The vertex at which recurrence is decided."""
    if g.loop_certificate is not None:
        return g.loop_certificate.base
    if isinstance(g, ExplicitGraph):
        on_loops = loop_vertices(g)
        return next((v for v in g.order if v in on_loops), g.base_vertex())
    return g.base_vertex()


def _diagonal_green(g: GraphView, beta: float, v: VertexId, budget: SeriesBudget) -> Enclosure:
    """``sum_n A^n_{vv}`` with the bound ``1 <= G_vv <= G_bb`` on constructed graphs.

    When all loops pass the base ``b``, ``G_vv = 1 + S G_bb`` where ``S`` is
    the weight of the simple loops at ``b`` through ``v``, and ``S`` is at
    most the full simple loop sum.
    """
    cert = g.loop_certificate
    if cert is not None and v == cert.base:
        return cert.green(beta, budget)
    if is_constructed(g):
        bound = cert.green(beta, budget)
        lower = green(g, beta, v, v, budget).lo
        return Enclosure(max(1.0, lower), bound.hi)
    return green(g, beta, v, v, budget)


def boundary_vector(g: GraphView, beta: float, v: VertexId, budget: SeriesBudget = DEFAULT_BUDGET) -> HarmonicVector:
    """``w -> sum_n A(beta)^n_{wv}`` for a sink or infinite emitter ``v``."""
    if not _in_v_infinity(g, v):
        raise ValidationError(f"{v!r} is neither a sink nor an infinite emitter")
    if isinstance(g, ExplicitGraph):
        return _finite_boundary_vector(g, beta, v, budget)
    if not is_constructed(g):
        raise SummabilityUndecided("summability on an infinite graph needs a loop certificate")
    verdict = classify(g, beta, budget)
    if verdict.value is Recurrence.RECURRENT:
        raise NotSummable(f"{v!r} is not summable: the graph is recurrent at beta={beta}")
    if verdict.value is Recurrence.INDETERMINATE:
        raise SummabilityUndecided("recurrence undecided", partial=verdict)
    cut = truncate(g, budget.depth, budget.width)
    values: dict[VertexId, Enclosure] = {}
    estimates: dict[VertexId, float] = {}
    try:
        column = green_column(cut, beta, v, budget)
    except BudgetExhausted as exc:
        column = exc.partial
    for w in cut.order:
        lower = column[w].lo if w in column else 0.0
        values[w] = Enclosure(lower, INF)
        estimates[w] = lower
    values[v] = _diagonal_green(g, beta, v, budget)
    return HarmonicVector(values, tuple(cut.order), certified=False, estimates=estimates,
                          note="truncation lower bounds; exact only at the target vertex")


def _finite_boundary_vector(g: ExplicitGraph, beta: float, v: VertexId, budget: SeriesBudget) -> HarmonicVector:
    try:
        column = green_column(g, beta, v, budget)
    except BudgetExhausted as exc:
        raise SummabilityUndecided("Green function did not converge", partial=exc.partial) from None
    if not math.isfinite(column[v].hi):
        first_return = classify(g, beta, budget, base=v) if v in loop_vertices(g) else None
        if first_return is not None and first_return.value is Recurrence.RECURRENT:
            raise NotSummable(f"{v!r} is not summable at beta={beta}")
        raise SummabilityUndecided(f"summability of {v!r} undecided", partial=column)
    if not all(math.isfinite(val.hi) for val in column.values()):
        raise SummabilityUndecided("some Green function entries into the target are unbounded", partial=column)
    return HarmonicVector(column, tuple(g.order))


class Summability(enum.Enum):
    SUMMABLE = "Summable"
    NOT_SUMMABLE = "NotSummable"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class ExitSummability:
    """Verdict on an exit with the limit of ``m_k = green(t_1, t_k) / t^beta(k)`` when finite."""

    status: Summability
    limit: Enclosure | None = None
    sequence: tuple[Enclosure, ...] = ()
    reason: str = ""


def _classify_any(g: GraphView, beta: float, budget: SeriesBudget) -> RecurrenceClass:
    if g.loop_certificate is not None or isinstance(g, ExplicitGraph):
        return classify(g, beta, budget, base=None if g.loop_certificate is not None else loop_base(g))
    cut = truncate(g, budget.depth, budget.width)
    lower = classify(cut, beta, budget, base=g.base_vertex())
    if lower.value is Recurrence.RECURRENT and not lower.critical:
        return lower
    return RecurrenceClass(Recurrence.INDETERMINATE, Enclosure(lower.loop_sum.lo, INF))


def _assert_monotone(sequence: list[Enclosure]) -> None:
    for earlier, later in zip(sequence, sequence[1:]):
        if later.hi < earlier.lo:
            raise CertificateFailed("exit sequence decreased")


def exit_summability(
    g: GraphView, beta: float, t: ExitSpec, budget: SeriesBudget = DEFAULT_BUDGET, terms: int = 12
) -> ExitSummability:
    """Decide whether the exit ``t`` is summable at ``beta``."""
    verdict = _classify_any(g, beta, budget)
    if verdict.value is Recurrence.RECURRENT:
        return ExitSummability(Summability.NOT_SUMMABLE, reason="recurrent: the Green function diverges")
    if verdict.value is Recurrence.INDETERMINATE:
        return ExitSummability(Summability.INDETERMINATE, reason="transience not certified")
    t1 = t.vertex_at(1)
    try:
        if t.kind is ExitKind.BARE and t.bare_from == 1:
            alpha = _diagonal_green(g, beta, t1, budget)
            if not math.isfinite(alpha.hi):
                return ExitSummability(Summability.INDETERMINATE, reason="green(t_1, t_1) not certified")
            return ExitSummability(Summability.SUMMABLE, alpha, (alpha,) * terms,
                                   "bare exit: m_k = green(t_1, t_1) for every k")
        if t.triple is not None and t.kind in (ExitKind.ROW_FINITE, ExitKind.EMITTER) and is_constructed(g):
            return _attached_summability(g, beta, t, budget, terms)
    except BudgetExhausted as exc:
        return ExitSummability(Summability.INDETERMINATE, reason=str(exc))
    return ExitSummability(Summability.INDETERMINATE, reason="no closed form or tail bound for this exit")


def _attached_summability(g: GraphView, beta: float, t: ExitSpec, budget: SeriesBudget, terms: int) -> ExitSummability:
    membership = j_membership(t.triple, beta)
    if membership.membership is Membership.NOT_MEMBER:
        return ExitSummability(Summability.NOT_SUMMABLE, reason="a side series of the exit diverges")
    if membership.membership is Membership.INDETERMINATE:
        return ExitSummability(Summability.INDETERMINATE, reason="series membership undecided")
    variant = ExitVariant.of(t)
    alpha = _diagonal_green(g, beta, t.vertex_at(1), budget)
    sequence = []
    for k in range(1, terms + 1):
        if variant is ExitVariant.ROW_FINITE:
            x = closed_form_xy(t.triple, beta, k, variant)[0]
            y = closed_form_xy(t.triple, beta, 2 * k + 1, variant)[1]
        else:
            x, y = closed_form_xy(t.triple, beta, k, variant)
        sequence.append(alpha * (x + y))
    _assert_monotone(sequence)
    x_limit, y_limit = closed_form_limits(t.triple, beta, variant)
    limit = alpha * (x_limit + y_limit)
    if not math.isfinite(limit.hi):
        return ExitSummability(Summability.INDETERMINATE, reason="limit not certified finite")
    return ExitSummability(Summability.SUMMABLE, limit, tuple(sequence), "closed forms for the split sums")


def _step_factor(t: ExitSpec, beta: float, k: int) -> Enclosure:
    """``t^beta(k) = t(k) exp(-(k - 1) beta)``."""
    weight = t.step_weight(k)
    if weight.bit_length() < 1000:
        return Enclosure.point(weight) * exp_neg((k - 1) * beta)
    # too large for a float: work with log t(k), which math.log takes exactly from an int
    return exp_neg((k - 1) * beta - Enclosure.around(math.log(weight), 2))


def exit_harmonic_vector(
    g: GraphView, beta: float, t: ExitSpec, budget: SeriesBudget = DEFAULT_BUDGET
) -> HarmonicVector:
    """``v -> lim_k green(v, t_k) / t^beta(k)`` for a summable exit.

    For a bare exit every path to ``t_k`` either passes ``t_1`` or runs
    along the exit from some ``t_j``, so the limit is ``green(v, t_1)`` plus
    ``1 / t^beta(j)`` at ``v = t_j``. Away from ``t_1`` the values come from a
    truncation and are reported as estimates.
    """
    status = exit_summability(g, beta, t, budget)
    if status.status is Summability.NOT_SUMMABLE:
        raise NotSummable(f"exit {t.name!r} is not summable at beta={beta}: {status.reason}")
    if status.status is Summability.INDETERMINATE:
        raise SummabilityUndecided(f"summability of exit {t.name!r} undecided: {status.reason}")
    t1 = t.vertex_at(1)
    cut = truncate(g, budget.depth, budget.width)
    on_exit: dict[VertexId, int] = {}
    if t.index_of is not None:
        on_exit = {v: j for v in cut.order if (j := t.index_of(v)) is not None}
    else:
        for j in range(1, budget.depth + 1):
            v = t.vertex_at(j)
            if not cut.has_vertex(v):
                break
            on_exit[v] = j
    bare = t.kind is ExitKind.BARE and t.bare_from == 1
    if bare:
        column = _safe_column(cut, beta, t1, budget)
        estimates = {}
        for v in cut.order:
            value = column[v].mid if math.isfinite(column[v].hi) else column[v].lo
            j = on_exit.get(v)
            if j is not None and j >= 2:
                value += 1.0 / _step_factor(t, beta, j).mid
            estimates[v] = value
    else:
        estimates = _attached_estimates(cut, beta, t, on_exit, budget)
    values = {v: Enclosure(0.0, INF) for v in cut.order}
    values[t1] = status.limit
    if status.limit.hi < 1.0:
        raise CertificateFailed("exit vector is below one at t_1")
    return HarmonicVector(values, tuple(cut.order), certified=False, estimates=estimates,
                          note="exact at t_1; elsewhere finite-section estimates")


def _safe_column(cut: ExplicitGraph, beta: float, w: VertexId, budget: SeriesBudget) -> dict[VertexId, Enclosure]:
    try:
        return green_column(cut, beta, w, budget)
    except BudgetExhausted as exc:
        return exc.partial


def _attached_estimates(
    cut: ExplicitGraph, beta: float, t: ExitSpec, on_exit: dict[VertexId, int], budget: SeriesBudget
) -> dict[VertexId, float]:
    """Ratios ``green(v, t_K) / t^beta(K)`` at the furthest exit vertex inside the truncation."""
    K = max(on_exit.values(), default=1)
    column = _safe_column(cut, beta, t.vertex_at(K), budget)
    scale = _step_factor(t, beta, K).mid
    return {v: column[v].lo / scale for v in cut.order}


class MarkovBridge:
    """Stochastic matrix on edges: ``B_{e0,e1} = psi_{r(e1)} exp(-beta F(e1)) / psi_{r(e0)}`` when ``r(e0) = s(e1)``."""

    def __init__(self, g: ExplicitGraph, beta: float, psi: HarmonicVector, budget: SeriesBudget) -> None:
        self.graph = g
        self.beta = beta
        self.psi = psi
        self.budget = budget
        self.edges: list[tuple[VertexId, VertexId, float]] = []
        for b in g.bundles():
            fam = b.family
            for i in range(1, fam.count + 1):
                self.edges.append((b.src, b.dst, fam.member_F(i)))
        n = len(self.edges)
        self.lo = np.zeros((n, n))
        self.hi = np.zeros((n, n))
        starting: dict[VertexId, list[int]] = {}
        for j, (s, _, _) in enumerate(self.edges):
            starting.setdefault(s, []).append(j)
        for i, (_, r0, _) in enumerate(self.edges):
            for j in starting.get(r0, []):
                _, r1, f1 = self.edges[j]
                value = psi[r1] * weight_enclosure(beta, f1) / psi[r0]
                self.lo[i, j], self.hi[i, j] = value.lo, value.hi

    def row_sums(self) -> list[Enclosure]:
        sums = []
        for i in range(len(self.edges)):
            total = Enclosure.zero()
            for lo, hi in zip(self.lo[i], self.hi[i]):
                if hi > 0:
                    total = total + Enclosure(float(lo), float(hi))
            sums.append(total)
        return sums

    def power(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        size = len(self.edges)
        lo, hi = np.eye(size), np.eye(size)
        for _ in range(n):
            lo, hi = imatmul(lo, hi, self.lo, self.hi)
        return lo, hi

    def induction_rhs(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """``psi_{r(e)}^-1 psi_{r(f)} exp(-beta F(f)) A^(n-1)_{r(e), s(f)}`` as an interval matrix."""
        g = self.graph
        a_lo, a_hi = weight_matrix(g, self.beta, self.budget)
        p_lo, p_hi = np.eye(g.vertex_count), np.eye(g.vertex_count)
        for _ in range(n - 1):
            p_lo, p_hi = imatmul(p_lo, p_hi, a_lo, a_hi)
        size = len(self.edges)
        lo, hi = np.zeros((size, size)), np.zeros((size, size))
        for i, (_, r_e, _) in enumerate(self.edges):
            for j, (s_f, r_f, f_f) in enumerate(self.edges):
                power = Enclosure(float(p_lo[g.index(r_e), g.index(s_f)]), float(p_hi[g.index(r_e), g.index(s_f)]))
                value = self.psi[r_f] * weight_enclosure(self.beta, f_f) * power / self.psi[r_e]
                lo[i, j], hi[i, j] = value.lo, value.hi
        return lo, hi

    def induction_holds(self, n: int) -> bool:
        if n < 1:
            raise ValidationError("the power identity is stated for n >= 1")
        b_lo, b_hi = self.power(n)
        r_lo, r_hi = self.induction_rhs(n)
        return bool(np.all(b_lo <= r_hi) and np.all(r_lo <= b_hi))


def markov_bridge(
    g: GraphView, beta: float, psi: HarmonicVector, budget: SeriesBudget = DEFAULT_BUDGET, max_edges: int = 4000
) -> MarkovBridge:
    """The stochastic edge matrix of a strictly positive harmonic vector on a finite graph."""
    g = _require_finite(g)
    if any(b.family.is_infinite for b in g.bundles()):
        raise ValidationError("the edge matrix needs finitely many edges")
    if sum(b.family.count for b in g.bundles()) > max_edges:
        raise ValidationError("too many edges for an explicit edge matrix")
    for v in g.order:
        if not psi[v].lo > 0:
            raise NotHarmonic(f"psi must be strictly positive, fails at {v!r}", witness=v)
    check = almost_harmonic_check(g, beta, psi, g.order, budget)
    if check.kind is not HarmonicKind.HARMONIC:
        raise NotHarmonic(f"psi is {check.kind.value}", witness=check.witness or next(iter(check.defect_support), None))
    return MarkovBridge(g, beta, psi, budget)


class Existence(enum.Enum):
    YES = "Yes"
    NO = "No"
    INDETERMINATE = "Indeterminate"


class MeasureLabel(enum.Enum):
    CONSERVATIVE = "Conservative"
    DISSIPATIVE = "Dissipative"
    UNKNOWN = "Unknown"


@dataclass
class KmsReport:
    """Extremal gauge invariant ``beta``-KMS weights in vector form.

    ``harmonic_rays`` pairs a source, either :data:`UNIQUE_RECURRENT` or an
    exit name, with its vector.
    """

    beta: float
    exists: Existence
    recurrence: RecurrenceClass
    pressure: Enclosure | None = None
    boundary_rays: list[tuple[VertexId, HarmonicVector]] = field(default_factory=list)
    harmonic_rays: list[tuple[str, HarmonicVector]] = field(default_factory=list)
    unenumerated_harmonics: bool = False
    measure_label: MeasureLabel = MeasureLabel.UNKNOWN
    notes: list[str] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return self.exists is not Existence.INDETERMINATE and self.recurrence.value is not Recurrence.INDETERMINATE

    def to_json(self) -> dict[str, Any]:
        return {
            "beta": self.beta,
            "exists": self.exists.value,
            "recurrence": self.recurrence.to_json(),
            "pressure": None if self.pressure is None else self.pressure.to_json(),
            "boundary_rays": [{"vertex": vertex_key(v), "vector": vec.to_json()} for v, vec in self.boundary_rays],
            "harmonic_rays": [{"source": src, "vector": vec.to_json()} for src, vec in self.harmonic_rays],
            "unenumerated_harmonics": self.unenumerated_harmonics,
            "measure_label": self.measure_label.value,
            "notes": list(self.notes),
        }


def _existence(verdict: RecurrenceClass, p: Enclosure) -> Existence:
    """Weights exist iff the pressure is at most zero; on strongly connected
    graphs a simple loop sum above one forces positive pressure and a
    transient or recurrent verdict forces it to be at most zero."""
    if p.lo > 0 or verdict.loop_sum.lo > 1.0:
        return Existence.NO
    if verdict.value is not Recurrence.INDETERMINATE or p.hi <= 0:
        return Existence.YES
    return Existence.INDETERMINATE


def _safe_pressure(g: GraphView, mode: PressureMode, beta: float, budget: SeriesBudget) -> Enclosure:
    try:
        return pressure(g, mode, beta, budget)
    except (KmsGraphError, ValueError, FloatingPointError):
        return Enclosure(-INF, INF)


def _label(verdict: RecurrenceClass) -> MeasureLabel:
    return {
        Recurrence.RECURRENT: MeasureLabel.CONSERVATIVE,
        Recurrence.TRANSIENT: MeasureLabel.DISSIPATIVE,
    }.get(verdict.value, MeasureLabel.UNKNOWN)


def recurrent_vector(g: GraphView, beta: float, budget: SeriesBudget = DEFAULT_BUDGET) -> HarmonicVector:
    """Perron eigenvector of ``A(beta)`` on a finite section, normalized at the first vertex.

    On finite graphs this is the harmonic vector itself up to rounding; on
    infinite graphs it approximates the recurrent solution and the change
    between two section sizes is recorded in the note.
    """
    if isinstance(g, ExplicitGraph):
        order, estimates = _perron(g, beta, budget)
        note = "Perron eigenvector of the finite matrix"
    else:
        small = truncate(g, max(2, budget.depth // 2), budget.width)
        large = truncate(g, budget.depth, budget.width)
        _, coarse = _perron(small, beta, budget)
        order, estimates = _perron(large, beta, budget)
        drift = max((abs(coarse[v] - estimates[v]) for v in coarse), default=0.0)
        note = f"finite-section Perron estimate; drift between sections {drift:.3g}"
    values = {v: Enclosure(0.0, INF) for v in order}
    return HarmonicVector(values, tuple(order), certified=False, estimates=estimates,
                          normalized_at=order[0], note=note)


def _perron(g: ExplicitGraph, beta: float, budget: SeriesBudget) -> tuple[list, dict[VertexId, float]]:
    lo, hi = weight_matrix(g, beta, budget)
    if not np.isfinite(hi).all():
        raise ValidationError("A(beta) has an unbounded entry")
    mid = 0.5 * (lo + hi)
    eigenvalues, vectors = np.linalg.eig(mid)
    i = int(np.argmax(eigenvalues.real))
    vec = np.abs(vectors[:, i].real)
    order = g.order
    base = vec[0] if vec[0] > 0 else float(np.max(vec))
    return order, {v: float(x / base) for v, x in zip(order, vec)}


def _normalize(vector: HarmonicVector, base: VertexId) -> HarmonicVector:
    try:
        return vector.normalized(base)
    except (ValidationError, InsufficientSupport):
        return vector


def enumerate_kms(g: GraphView, beta: float, budget: SeriesBudget = DEFAULT_BUDGET) -> KmsReport:
    """Existence, recurrence and the extremal rays of ``beta``-KMS weights."""
    if isinstance(g, ExplicitGraph):
        return _enumerate_finite(g, beta, budget)
    if is_constructed(g):
        return _enumerate_constructed(g, beta, budget)
    verdict = _classify_any(g, beta, budget)
    report = KmsReport(beta, Existence.INDETERMINATE, verdict, notes=["no loop certificate for an infinite graph"])
    if not g.declared_exits:
        report.unenumerated_harmonics = True
        raise IncompleteExitData("exits undeclared on an infinite graph", partial=report)
    report.unenumerated_harmonics = True
    return report


def _enumerate_finite(g: ExplicitGraph, beta: float, budget: SeriesBudget) -> KmsReport:
    if not is_cofinal(g):
        raise ValidationError("KMS enumeration needs a cofinal graph")
    base = g.order[0]
    on_loops = loop_vertices(g)
    if not on_loops:
        report = KmsReport(beta, Existence.YES, RecurrenceClass(Recurrence.TRANSIENT, Enclosure.zero()),
                           Enclosure(-INF, -INF), measure_label=MeasureLabel.DISSIPATIVE)
        report.notes.append("no loops: every vertex is summable")
        _add_boundary_rays(g, beta, budget, report, base, sorted(v_infinity(g), key=g.index))
        sinks = [v for v in g.order if classify_vertex(g, v) is VertexClass.SINK]
        if not sinks:
            report.unenumerated_harmonics = True
        return report
    verdict = classify(g, beta, budget, base=loop_base(g))
    p = _safe_pressure(g, PressureMode.GENERAL, beta, budget)
    report = KmsReport(beta, _existence(verdict, p), verdict, p)
    if report.exists is Existence.NO:
        return report
    report.measure_label = _label(verdict)
    if verdict.value is Recurrence.RECURRENT:
        report.harmonic_rays.append((UNIQUE_RECURRENT, recurrent_vector(g, beta, budget)))
        if verdict.critical:
            report.notes.append("loop sum equals one within the certificate tolerance")
    elif verdict.value is Recurrence.TRANSIENT:
        _add_boundary_rays(g, beta, budget, report, base, sorted(v_infinity(g), key=g.index))
    else:
        report.unenumerated_harmonics = True
        report.notes.append("recurrence undecided at this beta")
    return report


def _add_boundary_rays(
    g: GraphView, beta: float, budget: SeriesBudget, report: KmsReport, base: VertexId, candidates: Iterable[VertexId]
) -> None:
    for v in candidates:
        try:
            vector = boundary_vector(g, beta, v, budget)
        except NotSummable:
            continue
        except SummabilityUndecided as exc:
            report.unenumerated_harmonics = True
            report.notes.append(f"summability of {vertex_key(v)} undecided: {exc}")
            continue
        report.boundary_rays.append((v, _normalize(vector, base)))


def _enumerate_constructed(g: GraphView, beta: float, budget: SeriesBudget) -> KmsReport:
    verdict = classify(g, beta, budget)
    p = _safe_pressure(g, PressureMode.GAUGE, beta, budget)
    report = KmsReport(beta, _existence(verdict, p), verdict, p)
    if report.exists is Existence.NO:
        return report
    report.measure_label = _label(verdict)
    base = g.base_vertex()
    if verdict.value is Recurrence.RECURRENT:
        report.harmonic_rays.append((UNIQUE_RECURRENT, recurrent_vector(g, beta, budget)))
        return report
    if verdict.value is Recurrence.INDETERMINATE:
        report.unenumerated_harmonics = True
        report.notes.append("recurrence undecided at this beta")
        return report
    cut = truncate(g, budget.depth, budget.width)
    emitters = [v for v in cut.order if classify_vertex(g, v) is VertexClass.INFINITE_EMITTER]
    if g.details.get("emitter_count", len(emitters)) is None:
        report.unenumerated_harmonics = True
        report.notes.append(f"infinitely many infinite emitters; {len(emitters)} listed within the truncation")
    _add_boundary_rays(g, beta, budget, report, base, emitters)
    for spec in g.declared_exits:
        status = exit_summability(g, beta, spec, budget)
        if status.status is Summability.SUMMABLE:
            report.harmonic_rays.append((spec.name, exit_harmonic_vector(g, beta, spec, budget)))
        elif status.status is Summability.INDETERMINATE:
            report.unenumerated_harmonics = True
            report.notes.append(f"exit {spec.name}: {status.reason}")
    return report
