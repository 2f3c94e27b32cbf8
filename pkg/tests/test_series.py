import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixtures import counts_matrix, edge, loop_and_sink, two_loops
from kmsgraph.constructor import exx1
from kmsgraph.errors import ValidationError
from kmsgraph.graph import ExplicitGraph
from kmsgraph.series import SeriesBudget, entry, green, green_column, power_entry
from kmsgraph.verify import PathSumQuery, brute_force_path_counts, random_strongly_connected
from oracles import S_AT_2, TWO_LOOPS_GREEN_AT_2


class TestEntry:
    def test_two_loops_at_log2(self):
        e = entry(two_loops(), math.log(2), "v", "v")
        assert e.contains(1.0) and e.width < 1e-15

    def test_exx1_loop_weight(self):
        e = entry(exx1(), 2.0, "v", "v")
        assert e.contains(S_AT_2) and e.width < 1e-9

    def test_missing_edge(self):
        e = entry(loop_and_sink(), 1.0, "s", "v")
        assert (e.lo, e.hi) == (0.0, 0.0)


class TestPowerEntry:
    def test_chain(self):
        g = ExplicitGraph(["a", "b", "c"], [edge("a", "b"), edge("b", "c")])
        value = power_entry(g, 0.7, 2, "a", "c")
        assert value.contains(math.exp(-1.4)) and value.width < 1e-15

    def test_two_loops_fifth_power(self):
        beta = 1.3
        value = power_entry(two_loops(), beta, 5, "v", "v")
        assert value.contains(32 * math.exp(-5 * beta))

    def test_zeroth_power_is_identity(self):
        g = two_loops()
        assert power_entry(g, 1.0, 0, "v", "v").lo == 1.0

    def test_negative_power_rejected(self):
        with pytest.raises(ValidationError):
            power_entry(two_loops(), 1.0, -1, "v", "v")

    def test_random_graph_against_path_enumeration(self):
        g = counts_matrix([[1, 2, 0, 1], [0, 0, 3, 0], [1, 0, 1, 2], [2, 1, 0, 0]])
        for v in g.order:
            for w in g.order:
                brute = brute_force_path_counts(g, PathSumQuery(v, w, 3, beta=1.0))[3]
                assert power_entry(g, 1.0, 3, v, w).intersects(brute)

    def test_infinite_graph_slices(self):
        from kmsgraph.constructor import backbone

        g = backbone()
        value = power_entry(g, 1.0, 3, ("v", 1), ("v", 4))
        assert value.contains(math.exp(-3.0))


class TestGreen:
    def test_two_loops_closed_form(self):
        value = green(two_loops(), 2.0, "v", "v")
        assert value.contains(TWO_LOOPS_GREEN_AT_2)
        assert value.width < 1e-8

    def test_two_loops_at_log2_diverges(self):
        value = green(two_loops(), math.log(2), "v", "v", SeriesBudget(max_terms=2000))
        assert value.hi == math.inf
        assert value.lo > 100

    def test_sink_column(self):
        beta = 1.0
        col = green_column(loop_and_sink(), beta, "s")
        x = math.exp(-beta)
        assert col["s"].contains(1.0)
        assert col["v"].contains(x / (1 - x))


@given(st.integers(0, 500), st.sampled_from([Fraction(1, 2), Fraction(1, 3), Fraction(2, 7)]),
       st.integers(1, 4))
@settings(max_examples=40, deadline=None)
def test_enclosure_contains_exact_value(seed, t, n):
    """The float enclosure at beta = -log t contains the exact rational power."""
    g = random_strongly_connected(seed, max_vertices=4)
    beta = -math.log(t)
    v, w = g.order[0], g.order[-1]
    exact = power_entry(g, None, n, v, w, t=t)
    enc = power_entry(g, beta, n, v, w)
    slack = 1e-12 * max(1.0, float(exact))
    assert enc.lo - slack <= float(exact) <= enc.hi + slack
