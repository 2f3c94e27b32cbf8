from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixtures import LOG2, edge, two_loops
from kmsgraph.constructor import ConstructionRecipe, exx1, realise
from kmsgraph.enclosure import Enclosure
from kmsgraph.errors import ValidationError
from kmsgraph.graph import ExplicitGraph
from kmsgraph.harmonic import enumerate_kms
from kmsgraph.series import power_entry
from kmsgraph.verify import (
    ExitVariant,
    PathSumQuery,
    brute_force_path_counts,
    brute_force_path_sum,
    closed_form_xy,
    cross_check_exit,
    random_strongly_connected,
    verify_report,
)
from oracles import EXX1_CRITICAL_BETA

REV2 = ("rev2", LOG2, ["[h,inf)", "[h+1,h+2]"])
INTRO1 = ("intro1", LOG2, ["]h+1,h+2["])


class TestBruteForce:
    def test_two_loops_counts(self):
        counts = brute_force_path_counts(two_loops(), PathSumQuery("v", "v", 4, t=Fraction(1, 3)))
        assert counts[1:] == [Fraction(2, 3), Fraction(4, 9), Fraction(8, 27), Fraction(16, 81)]

    def test_chain_has_single_length(self):
        g = ExplicitGraph(list("abc"), [edge("a", "b", 2), edge("b", "c", 3)])
        counts = brute_force_path_counts(g, PathSumQuery("a", "c", 3, t=Fraction(1)))
        assert counts[1:] == [0, 6, 0]

    def test_float_mode_encloses_exact(self):
        g = random_strongly_connected(7)
        v = g.order[0]
        approx = brute_force_path_sum(g, PathSumQuery(v, v, 4, beta=LOG2))
        exact = brute_force_path_sum(g, PathSumQuery(v, v, 4, t=Fraction(1, 2)))
        assert approx.lo <= float(exact) <= approx.hi or abs(approx.mid - float(exact)) < 1e-12

    def test_query_validation(self):
        with pytest.raises(ValidationError):
            PathSumQuery("v", "v", 3)
        with pytest.raises(ValidationError):
            PathSumQuery("v", "v", 0, t=Fraction(1, 2))
        with pytest.raises(ValidationError):
            PathSumQuery("v", "v", 3, t=Fraction(-1, 2))

    @given(st.integers(0, 500), st.sampled_from([Fraction(1, 2), Fraction(1, 3), Fraction(1, 5)]),
           st.integers(1, 4))
    @settings(max_examples=30, deadline=None)
    def test_matches_power_entry(self, seed, t, n_max):
        g = random_strongly_connected(seed, max_vertices=4)
        v, w = g.order[0], g.order[-1]
        counts = brute_force_path_counts(g, PathSumQuery(v, w, n_max, t=t))
        for n in range(1, n_max + 1):
            assert counts[n] == power_entry(g, None, n, v, w, t=t)


class TestClosedForms:
    def test_nondecreasing_in_k(self):
        g = realise(ConstructionRecipe.parse(*REV2))
        triple = g.declared_exits[1].triple
        for variant in ExitVariant:
            xs = [closed_form_xy(triple, LOG2 + 1.5, k, variant) for k in range(1, 7)]
            for (x0, y0), (x1, y1) in zip(xs, xs[1:]):
                assert x1.hi >= x0.lo and y1.hi >= y0.lo

    def test_rejects_k_zero(self):
        g = realise(ConstructionRecipe.parse(*REV2))
        with pytest.raises(ValidationError):
            closed_form_xy(g.declared_exits[1].triple, 2.0, 0, ExitVariant.ROW_FINITE)

    def test_bare_exit_has_no_closed_form(self):
        g = realise(ConstructionRecipe.parse(*REV2))
        with pytest.raises(ValidationError):
            ExitVariant.of(g.declared_exits[0])


class TestCrossCheck:
    def test_rev2_row_finite_exit(self):
        g = realise(ConstructionRecipe.parse(*REV2))
        report = cross_check_exit(g, g.declared_exits[1], LOG2 + 1.5)
        assert report.ok, report.lines()
        assert [c.k for c in report.checks] == [1, 2, 3, 4, 5]

    def test_intro1_emitter_exit(self):
        g = realise(ConstructionRecipe.parse(*INTRO1, emitters=2))
        report = cross_check_exit(g, g.declared_exits[0], LOG2 + 1.5)
        assert report.ok, report.lines()

    @pytest.mark.parametrize("recipe, kw, index", [(REV2, {}, 1), (INTRO1, {"emitters": 2}, 0)])
    def test_corrupted_closed_form_is_caught(self, recipe, kw, index):
        g = realise(ConstructionRecipe.parse(*recipe, **kw))

        def off_by_a_bit(triple, beta, k, variant):
            x, y = closed_form_xy(triple, beta, k, variant)
            return x + Enclosure.point(1e-3), y

        report = cross_check_exit(g, g.declared_exits[index], LOG2 + 1.5, closed_form=off_by_a_bit)
        assert not report.ok
        assert any(line.startswith("FAIL") for line in report.lines())

    def test_short_horizon_is_reported(self):
        g = realise(ConstructionRecipe.parse(*REV2))
        report = cross_check_exit(g, g.declared_exits[1], LOG2 + 1.5, L_max=6)
        assert report.problems and all(c.agrees for c in report.checks)


class TestVerifyReport:
    def test_exx1_report_passes(self):
        beta = EXX1_CRITICAL_BETA + 0.3
        listing = verify_report(exx1(), beta, enumerate_kms(exx1(), beta))
        assert listing.passed, listing.lines()

    def test_two_loops_report_passes(self):
        listing = verify_report(two_loops(), LOG2, enumerate_kms(two_loops(), LOG2))
        assert listing.passed, listing.lines()

    def test_tampered_recurrence_fails(self):
        beta = EXX1_CRITICAL_BETA + 0.3
        report = enumerate_kms(exx1(), beta)
        report.boundary_rays = report.boundary_rays[:1]
        other = enumerate_kms(exx1(), EXX1_CRITICAL_BETA - 0.2)
        report.recurrence = other.recurrence
        listing = verify_report(exx1(), beta, report)
        assert not listing.passed

    def test_wrong_beta_fails(self):
        report = enumerate_kms(two_loops(), LOG2)
        assert not verify_report(two_loops(), 1.0, report).passed


class TestRandomGraphs:
    def test_deterministic(self):
        from kmsgraph import kgd

        assert kgd.dumps(random_strongly_connected(11)) == kgd.dumps(random_strongly_connected(11))

    @given(st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_strongly_connected(self, seed):
        g = random_strongly_connected(seed)
        n = g.vertex_count
        for v in g.order:
            seen, frontier = {v}, [v]
            while frontier:
                u = frontier.pop()
                for b in g.out_bundles(u):
                    if b.dst not in seen:
                        seen.add(b.dst)
                        frontier.append(b.dst)
            assert len(seen) == n
