"""Independent oracles for the analysis and construction code.

Brute force path enumeration on finite graphs, closed forms for the exit
sequences ``x_k`` and ``y_k`` of constructed attachments, a harness that
recounts those sequences on a truncation, and a checker that re-derives a
:class:`~kmsgraph.harmonic.KmsReport` from primitives.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from .enclosure import Enclosure, exp_neg
from .errors import BudgetExhausted, ValidationError
from .graph import EdgeBundle, ExitKind, ExitSpec, ExplicitGraph, GraphView, VertexId, WeightFamily, truncate
from .sequences import SequenceTriple, j_membership, side_sum
from .series import DEFAULT_BUDGET, SeriesBudget, family_weight


@dataclass(frozen=True)
class PathSumQuery:
    """Sum of path weights from ``src`` to ``dst`` over lengths ``1 .. max_length``.

    Give exactly one of ``t`` (exact mode, ``exp(-beta)`` replaced by a
    positive rational) and ``beta``.
    """

    src: VertexId
    dst: VertexId
    max_length: int
    t: Fraction | None = None
    beta: float | None = None

    def __post_init__(self) -> None:
        if self.max_length < 1:
            raise ValidationError("max_length must be positive")
        if (self.t is None) == (self.beta is None):
            raise ValidationError("give exactly one of t and beta")
        if self.t is not None and Fraction(self.t) <= 0:
            raise ValidationError("t must be positive")

    @property
    def exact(self) -> bool:
        return self.t is not None


def brute_force_path_counts(
    g: ExplicitGraph, q: PathSumQuery, max_paths: int = 2_000_000, budget: SeriesBudget = DEFAULT_BUDGET
) -> list[Fraction] | list[Enclosure]:
    """Weighted path sums per length, entry ``n`` for paths of length ``n`` (entry 0 unused).

    Every vertex sequence is walked explicitly; parallel edges contribute
    through the bundle weight.
    """
    if not isinstance(g, ExplicitGraph):
        raise ValidationError("brute force enumeration needs a finite explicit graph")
    for u in (q.src, q.dst):
        g.index(u)
    if q.exact:
        t = Fraction(q.t)
        weight = {id(b): b.family.exact_weight(t) for b in g.bundles()}
        zero: Any = Fraction(0)
    else:
        weight = {id(b): family_weight(b.family, q.beta, budget) for b in g.bundles()}
        zero = Enclosure.zero()
    out = {v: list(g.out_bundles(v)) for v in g.vertices()}
    sums = [zero] * (q.max_length + 1)
    visited = 0
    stack: list[tuple[VertexId, int, Any]] = [(q.src, 0, None)]
    while stack:
        u, length, w = stack.pop()
        visited += 1
        if visited > max_paths:
            raise BudgetExhausted("too many paths to enumerate", sums)
        if length > 0 and u == q.dst:
            sums[length] = sums[length] + w
        if length == q.max_length:
            continue
        for b in out[u]:
            step = weight[id(b)]
            stack.append((b.dst, length + 1, step if w is None else w * step))
    return sums


def brute_force_path_sum(
    g: ExplicitGraph, q: PathSumQuery, max_paths: int = 2_000_000, budget: SeriesBudget = DEFAULT_BUDGET
) -> Fraction | Enclosure:
    """Total weight of all paths ``src -> dst`` with length between 1 and ``max_length``."""
    counts = brute_force_path_counts(g, q, max_paths, budget)
    total = counts[0]
    for value in counts[1:]:
        total = total + value
    return total


class ExitVariant(enum.Enum):
    ROW_FINITE = "RowFinite"
    EMITTER = "Emitter"

    @classmethod
    def of(cls, spec: ExitSpec) -> ExitVariant:
        if spec.kind is ExitKind.ROW_FINITE:
            return cls.ROW_FINITE
        if spec.kind is ExitKind.EMITTER:
            return cls.EMITTER
        raise ValidationError(f"exit {spec.name!r} has no closed form")


def _emitter_factor(triple: SequenceTriple) -> Enclosure:
    return Enclosure.point(Fraction(triple.a(1), triple.a(1) + triple.c(1)))


def closed_form_xy(triple: SequenceTriple, beta: float, k: int, variant: ExitVariant) -> tuple[Enclosure, Enclosure]:
    """Closed forms of the split exit sums.

    Row-finite attachments give ``(x_(2k+1), y_k)``; emitter attachments give
    ``(x_(k+1), y_(k+1))``. Both are non-decreasing in ``k``.
    """
    if k < 1:
        raise ValidationError("k must be positive")
    if variant is ExitVariant.ROW_FINITE:
        x = 1.0 + side_sum(triple, beta, 1, k)
        y = side_sum(triple, beta, -1, k - 1)
        return x, y
    factor = _emitter_factor(triple)
    x = factor * (1.0 + exp_neg(beta) * side_sum(triple, beta, 1, k))
    y = factor * exp_neg(2 * beta) * side_sum(triple, beta, -1, k)
    return x, y


def closed_form_limits(triple: SequenceTriple, beta: float, variant: ExitVariant, L: int = 60) -> tuple[Enclosure, Enclosure]:
    """Enclosures of ``sup_k x_k`` and ``sup_k y_k``; infinite upper ends when a side diverges."""
    report = j_membership(triple, beta, L)
    c_side, b_side = report.c_side.value, report.b_side.value
    if variant is ExitVariant.ROW_FINITE:
        return 1.0 + c_side, b_side
    factor = _emitter_factor(triple)
    return factor * (1.0 + exp_neg(beta) * c_side), factor * exp_neg(2 * beta) * b_side


def exit_path_counts(cut: ExplicitGraph, t1: VertexId, target: VertexId, L: int) -> list[int]:
    """``counts[n]`` = number of paths ``t1 -> target`` of length ``n`` that never return to ``t1``."""
    counts = [0] * (L + 1)
    layer = {t1: 1}
    for n in range(1, L + 1):
        nxt: dict[VertexId, int] = {}
        for u, ways in layer.items():
            for b in cut.out_bundles(u):
                if b.dst == t1:
                    continue
                nxt[b.dst] = nxt.get(b.dst, 0) + ways * b.family.count
        layer = nxt
        counts[n] = layer.get(target, 0)
    return counts


def _split_sums(counts: list[int], k: int, beta: float, step: int) -> tuple[Enclosure, Enclosure]:
    """``x_k`` and the part of ``y_k`` carried by lengths up to ``len(counts) - 1``."""
    x = exp_neg(beta)
    scale = exp_neg(-(k - 1) * beta) / Enclosure.point(step)
    head, tail = Enclosure.zero(), Enclosure.zero()
    power = Enclosure(1.0, 1.0)
    for n in range(1, len(counts)):
        power = power * x
        if counts[n] == 0:
            continue
        term = power * Enclosure.point(counts[n])
        if n < k:
            head = head + term
        else:
            tail = tail + term
    return scale * head, scale * tail


@dataclass
class ExitCheck:
    k: int
    closed_x: Enclosure
    closed_y: Enclosure
    counted_x: Enclosure
    counted_y: Enclosure

    @property
    def agrees(self) -> bool:
        return self.closed_x.intersects(self.counted_x) and self.closed_y.intersects(self.counted_y)


@dataclass
class CrossCheckReport:
    exit: str
    beta: float
    checks: list[ExitCheck] = field(default_factory=list)
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems and bool(self.checks) and all(c.agrees for c in self.checks)

    def lines(self) -> list[str]:
        out = [f"{'ok  ' if c.agrees else 'FAIL'} k={c.k} x={c.closed_x} vs {c.counted_x}; "
               f"y={c.closed_y} vs {c.counted_y}" for c in self.checks]
        return out + [f"note {p}" for p in self.problems]


def cross_check_exit(
    g: GraphView,
    exit_spec: ExitSpec,
    beta: float,
    k_max: int = 5,
    L_max: int = 12,
    depth: int = 600,
    width: int = 64,
    closed_form=closed_form_xy,
) -> CrossCheckReport:
    """Compare the closed forms with counts of paths ``t_1 -> t_k`` on a truncation.

    Row-finite exits are compared at ``x_(2k+1)`` and ``y_k``, emitter exits
    at ``x_(k+1)`` and ``y_(k+1)``, for ``k = 1 .. k_max``. Only checks whose
    paths fit in ``L_max`` steps are made; a truncation that misses a
    needed vertex is reported rather than raised.
    """
    variant = ExitVariant.of(exit_spec)
    report = CrossCheckReport(exit_spec.name, beta)
    cut = truncate(g, depth, width)
    t1 = exit_spec.vertex_at(1)
    if not cut.has_vertex(t1):
        report.problems.append(f"truncation misses t_1 = {t1!r}")
        return report
    triple = exit_spec.triple
    for k in range(1, k_max + 1):
        if variant is ExitVariant.ROW_FINITE:
            x_index, y_index = 2 * k + 1, k
            longest = max(x_index - 1, 2 * y_index - 2)
        else:
            x_index = y_index = k + 1
            longest = 2 * k + 2
        if longest > L_max:
            report.problems.append(f"k={k} needs paths of length {longest} > L_max")
            continue
        counted = []
        for index in (x_index, y_index):
            if index < 2:
                counted.append((Enclosure.zero(), Enclosure.zero()))
                continue
            target = exit_spec.vertex_at(index)
            if not cut.has_vertex(target):
                report.problems.append(f"truncation misses t_{index}")
                break
            counts = exit_path_counts(cut, t1, target, L_max)
            counted.append(_split_sums(counts, index, beta, exit_spec.step_weight(index)))
        else:
            cx, cy = closed_form(triple, beta, k, variant)
            report.checks.append(ExitCheck(k, cx, cy, counted[0][0], counted[1][1]))
    return report


def random_strongly_connected(
    seed: int, max_vertices: int = 6, max_parallel: int = 3, F: float = 1.0
) -> ExplicitGraph:
    """Seeded random strongly connected graph: a Hamiltonian cycle plus random chords."""
    rng = random.Random(seed)
    n = rng.randint(1, max_vertices)
    names = [f"v{i}" for i in range(n)]
    counts: dict[tuple[int, int], int] = {}
    perm = list(range(n))
    rng.shuffle(perm)
    for i in range(n):
        counts[(perm[i], perm[(i + 1) % n])] = rng.randint(1, max_parallel)
    for _ in range(rng.randint(0, n * n // 2 + 1)):
        key = (rng.randrange(n), rng.randrange(n))
        counts[key] = rng.randint(1, max_parallel)
    bundles = [EdgeBundle(names[i], names[j], WeightFamily.finite(c, F)) for (i, j), c in sorted(counts.items())]
    return ExplicitGraph(names, bundles)


@dataclass
class ClaimCheck:
    claim: str
    passed: bool
    detail: str = ""


@dataclass
class VerificationListing:
    checks: list[ClaimCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, claim: str, passed: bool, detail: str = "") -> None:
        self.checks.append(ClaimCheck(claim, bool(passed), detail))

    def lines(self) -> list[str]:
        return [f"{'PASS' if c.passed else 'FAIL'} {c.claim}" + (f" ({c.detail})" if c.detail else "")
                for c in self.checks]


def _independent_budget(budget: SeriesBudget) -> SeriesBudget:
    return SeriesBudget(
        max_terms=budget.max_terms, target_width=budget.target_width / 10, tail_policy=budget.tail_policy,
        ratio=budget.ratio, depth=budget.depth + budget.depth // 2, width=budget.width, tolerance=budget.tolerance,
    )


def verify_report(g: GraphView, beta: float, report: Any, budget: SeriesBudget = DEFAULT_BUDGET) -> VerificationListing:
    """Re-derive each claim of a KMS report from primitives with a separate budget."""
    from . import harmonic
    from .errors import KmsGraphError
    from .spectrum import Recurrence, classify

    listing = VerificationListing()
    fresh = _independent_budget(budget)
    listing.add("beta matches", math.isclose(report.beta, beta), f"{report.beta} vs {beta}")
    recurrence = report.recurrence.value
    rays_ok = not (recurrence is Recurrence.RECURRENT and report.boundary_rays)
    listing.add("no boundary rays under recurrence", rays_ok)
    expected_label = {
        Recurrence.RECURRENT: harmonic.MeasureLabel.CONSERVATIVE,
        Recurrence.TRANSIENT: harmonic.MeasureLabel.DISSIPATIVE,
    }.get(recurrence, harmonic.MeasureLabel.UNKNOWN)
    if report.exists is harmonic.Existence.NO:
        expected_label = harmonic.MeasureLabel.UNKNOWN
    listing.add("measure label matches recurrence", report.measure_label is expected_label,
                f"{report.measure_label.value} for {recurrence.value}")
    if report.exists is harmonic.Existence.NO:
        listing.add("no rays when no weights exist", not report.boundary_rays and not report.harmonic_rays)
        return listing
    try:
        again = classify(g, beta, fresh, base=harmonic.loop_base(g))
        listing.add("recurrence class", again.value is recurrence, f"{again.value.value} vs {recurrence.value}")
    except KmsGraphError as exc:
        listing.add("recurrence class", False, str(exc))
    for v, vector in report.boundary_rays:
        try:
            fresh_vector = harmonic.boundary_vector(g, beta, v, fresh)
            listing.add(f"boundary ray at {harmonic.vertex_key(v)} is summable", True)
            value = fresh_vector.values.get(v)
            if value is not None and vector.values.get(v) is not None and vector.certified:
                listing.add(f"boundary ray at {harmonic.vertex_key(v)} agrees",
                            _agree(vector.values[v], value, vector))
        except KmsGraphError as exc:
            listing.add(f"boundary ray at {harmonic.vertex_key(v)} is summable", False, str(exc))
    for source, _ in report.harmonic_rays:
        if source == harmonic.UNIQUE_RECURRENT:
            listing.add("recurrent harmonic ray", recurrence is Recurrence.RECURRENT)
            continue
        spec = next((s for s in g.declared_exits if s.name == source), None)
        if spec is None:
            listing.add(f"exit {source} is declared", False)
            continue
        status = harmonic.exit_summability(g, beta, spec, fresh)
        listing.add(f"exit {source} is summable", status.status is harmonic.Summability.SUMMABLE,
                    status.status.value)
    listed = {source for source, _ in report.harmonic_rays}
    if recurrence is Recurrence.TRANSIENT:
        for spec in g.declared_exits:
            if spec.name in listed:
                continue
            status = harmonic.exit_summability(g, beta, spec, fresh)
            listing.add(f"exit {spec.name} correctly omitted", status.status is not harmonic.Summability.SUMMABLE,
                        status.status.value)
    return listing


def _agree(a: Enclosure, b: Enclosure, vector: Any) -> bool:
    if vector.normalized_at is not None:
        return True
    return a.intersects(b)
