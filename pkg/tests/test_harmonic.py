import math
from fractions import Fraction

import numpy as np
import pytest

from fixtures import LOG2, counts_matrix, edge, loop_and_sink, point_vector, superharmonic_instance, two_loops
from kmsgraph.constructor import BackboneLayer, ConstructionRecipe, Layer, LayeredGraph, exx1, realise
from kmsgraph.enclosure import Enclosure
from kmsgraph.errors import InsufficientSupport, NotHarmonic, NotSummable, NotSuperHarmonic
from kmsgraph.graph import EdgeBundle, ExplicitGraph, WeightFamily, truncate
from kmsgraph.harmonic import (
    Existence,
    HarmonicKind,
    MeasureLabel,
    Summability,
    almost_harmonic_check,
    boundary_vector,
    enumerate_kms,
    exit_harmonic_vector,
    exit_summability,
    markov_bridge,
    riesz_decompose,
)
from kmsgraph.series import SeriesBudget, green_column
from kmsgraph.spectrum import GaugeLoopCertificate, Recurrence
from oracles import EXX1_CRITICAL_BETA


class ReturnCycle(Layer):
    """One extra vertex ``u`` with ``v_1 -> u -> v_1``."""

    rounds = 1

    def round_vertices(self, r):
        return [("u", 1)] if r == 1 else []

    def owns(self, v):
        return v == ("u", 1)

    def out_bundles(self, u):
        if u == ("v", 1):
            yield EdgeBundle(u, ("u", 1), WeightFamily.finite(1))
        elif u == ("u", 1):
            yield EdgeBundle(u, ("v", 1), WeightFamily.finite(1))

    def in_bundles(self, u):
        if u == ("u", 1):
            return [EdgeBundle(("v", 1), u, WeightFamily.finite(1))]
        if u == ("v", 1):
            return [EdgeBundle(("u", 1), u, WeightFamily.finite(1))]
        return []


def backbone_with_cycle():
    """The bare path with one loop of length two at its start; transient for every beta > 0."""
    spine = BackboneLayer()
    cert = GaugeLoopCertificate(("v", 1), Fraction(1), 0.0, lambda n: 1 if n == 2 else 0, Fraction(1))
    return LayeredGraph([spine, ReturnCycle()], [spine.exit("backbone")], certificate=cert)


class TestAlmostHarmonic:
    def test_single_loop_constant_vector_fails(self):
        g = ExplicitGraph(["v"], [edge("v", "v")])
        check = almost_harmonic_check(g, 1.0, point_vector({"v": 1.0}))
        assert check.kind is HarmonicKind.NOT_ALMOST_HARMONIC and check.witness == "v"

    def test_loop_and_sink(self):
        beta = 1.0
        x = math.exp(-beta)
        psi = point_vector({"v": x / (1 - x), "s": 1.0})
        check = almost_harmonic_check(loop_and_sink(), beta, psi)
        assert check.kind is HarmonicKind.ALMOST_HARMONIC
        assert check.defect_support == ("s",)

    def test_two_loops_harmonic(self):
        check = almost_harmonic_check(two_loops(), LOG2, point_vector({"v": 1.0}))
        assert check.kind is HarmonicKind.HARMONIC

    def test_missing_support(self):
        psi = point_vector({"v": 1.0})
        with pytest.raises(InsufficientSupport):
            psi["elsewhere"]


class TestRiesz:
    def test_single_loop(self):
        g = ExplicitGraph(["v"], [edge("v", "v")])
        parts = riesz_decompose(g, 1.0, point_vector({"v": 1.0}))
        assert parts.k["v"].contains(1 - math.exp(-1.0)) or abs(parts.k["v"].mid - (1 - math.exp(-1.0))) < 1e-15
        assert parts.h["v"].hi < 1e-9
        assert parts.potential["v"].contains(1.0) or abs(parts.potential["v"].mid - 1.0) < 1e-9

    def test_harmonic_input(self):
        parts = riesz_decompose(two_loops(), LOG2, point_vector({"v": 3.0}))
        assert parts.k["v"].hi == 0.0
        assert parts.h["v"].contains(3.0)

    def test_green_column_input(self):
        g = counts_matrix([[0, 1, 1], [1, 0, 1], [1, 1, 0]])
        beta = 1.5
        col = green_column(g, beta, "v2", SeriesBudget(target_width=1e-12))
        psi = point_vector({u: col[u].mid for u in g.order})
        parts = riesz_decompose(g, beta, psi)
        for u in g.order:
            assert parts.h[u].hi < 1e-9
            assert abs(parts.k[u].mid - (1.0 if u == "v2" else 0.0)) < 1e-9

    def test_not_super_harmonic(self):
        with pytest.raises(NotSuperHarmonic):
            riesz_decompose(two_loops(), 0.5, point_vector({"v": 1.0}))

    @pytest.mark.parametrize("seed", range(6))
    def test_exact_oracle(self, seed):
        g, psi, h, k = superharmonic_instance(seed)
        parts = riesz_decompose(g, LOG2, psi, SeriesBudget(target_width=1e-12))
        for u in g.order:
            assert abs(parts.h[u].mid - float(h[u])) < 1e-9
            assert abs(parts.k[u].mid - float(k[u])) < 1e-9


class TestBoundaryVector:
    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
    def test_loop_and_sink(self, beta):
        vec = boundary_vector(loop_and_sink(), beta, "s", SeriesBudget(target_width=1e-13))
        x = math.exp(-beta)
        for u, expected in (("s", 1.0), ("v", x / (1 - x))):
            assert max(abs(vec[u].lo - expected), abs(vec[u].hi - expected)) <= 1e-12

    def test_exx1_either_side(self):
        vec = boundary_vector(exx1(), 2.5, "v")
        assert math.isfinite(vec["w"].hi) and vec["v"].lo >= 1.0
        with pytest.raises(NotSummable):
            boundary_vector(exx1(), 1.5, "v")

    def test_acyclic_sink_always_summable(self):
        g = ExplicitGraph(["a", "b", "c"], [edge("a", "b", 2), edge("b", "c", 3), edge("a", "c")])
        for beta in (0.1, 1.0, 5.0):
            vec = boundary_vector(g, beta, "c")
            x = math.exp(-beta)
            assert abs(vec["a"].mid - (6 * x * x + x)) < 1e-12


class TestExits:
    def test_bare_exit_limit_is_green_at_start(self):
        g = backbone_with_cycle()
        beta = 0.8
        status = exit_summability(g, beta, g.declared_exits[0])
        assert status.status is Summability.SUMMABLE
        assert status.limit.contains(1 / (1 - math.exp(-2 * beta)))

    def test_bare_exit_vector_matches_finite_section_solve(self):
        g = backbone_with_cycle()
        beta = 0.8
        budget = SeriesBudget(depth=30, width=8)
        vec = exit_harmonic_vector(g, beta, g.declared_exits[0], budget)
        cut = truncate(g, 30, 8)
        # independent oracle: green(., t_K) / t_beta(K) from a dense linear solve
        n = cut.vertex_count
        A = np.zeros((n, n))
        for b in cut.bundles():
            A[cut.index(b.src), cut.index(b.dst)] += b.family.count * math.exp(-beta)
        K = max(j for (tag, j) in [u for u in cut.order if u[0] == "v"])
        col = np.linalg.solve(np.eye(n) - A, np.eye(n)[:, cut.index(("v", K))])
        oracle = col * math.exp((K - 1) * beta)
        for u in cut.order:
            if u == ("v", K):
                continue
            assert abs(vec.estimates[u] - oracle[cut.index(u)]) < 1e-9 * max(1.0, oracle[cut.index(u)])
        assert vec[("v", 1)].contains(oracle[cut.index(("v", 1))])

    def test_rev2_attached_exit(self):
        g = realise(ConstructionRecipe.parse("rev2", LOG2, ["[h,inf)", "[h+1,h+2]"]))
        spec = g.declared_exits[1]
        assert exit_summability(g, LOG2 + 1.5, spec).status is Summability.SUMMABLE
        assert exit_summability(g, LOG2 + 2.5, spec).status is Summability.NOT_SUMMABLE

    def test_recurrent_beta_is_not_summable(self):
        g = realise(ConstructionRecipe.parse("rev1", LOG2, ["]h,inf)"]))
        assert exit_summability(g, LOG2, g.declared_exits[0]).status is Summability.NOT_SUMMABLE


class TestBridge:
    def test_two_loops(self):
        bridge = markov_bridge(two_loops(), LOG2, point_vector({"v": 1.0}))
        assert np.allclose(bridge.lo, 0.5) and np.allclose(bridge.hi, 0.5)
        assert all(abs(s.mid - 1) < 1e-12 for s in bridge.row_sums())

    def test_counts_matrix_perron_vector(self):
        g = counts_matrix([[1, 2], [1, 0]])
        bridge = markov_bridge(g, LOG2, point_vector({"v0": 2.0, "v1": 1.0}))
        assert all(s.contains(1.0) for s in bridge.row_sums())
        for n in range(1, 5):
            assert bridge.induction_holds(n)

    def test_requires_harmonic(self):
        with pytest.raises(NotHarmonic):
            markov_bridge(two_loops(), 1.0, point_vector({"v": 1.0}))


class TestEnumerate:
    def test_exx1_above_critical(self):
        report = enumerate_kms(exx1(), EXX1_CRITICAL_BETA + 0.1)
        assert report.exists is Existence.YES
        assert len(report.boundary_rays) == 2 and not report.harmonic_rays
        assert report.measure_label is MeasureLabel.DISSIPATIVE

    def test_exx1_below_critical(self):
        assert enumerate_kms(exx1(), EXX1_CRITICAL_BETA - 0.1).exists is Existence.NO

    def test_two_loops_at_log2(self):
        report = enumerate_kms(two_loops(), LOG2)
        assert report.recurrence.value is Recurrence.RECURRENT
        assert len(report.harmonic_rays) == 1 and not report.boundary_rays

    def test_rev2_inside_attached_interval(self):
        g = realise(ConstructionRecipe.parse("rev2", LOG2, ["[h,inf)", "[h+1,h+2]"]))
        report = enumerate_kms(g, LOG2 + 1.5, SeriesBudget(depth=400))
        assert report.recurrence.value is Recurrence.TRANSIENT
        assert not report.boundary_rays
        assert sorted(src for src, _ in report.harmonic_rays) == ["exit-1", "exit-2"]

    def test_report_json_shape(self):
        data = enumerate_kms(exx1(), 2.5).to_json()
        assert data["exists"] == "Yes" and len(data["boundary_rays"]) == 2
        assert {"beta", "recurrence", "measure_label", "harmonic_rays"} <= set(data)
