import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmsgraph.errors import EmptyInterval, SlackExhausted, ValidationError
from kmsgraph.sequences import (
    IntervalSpec,
    Membership,
    clear_denominators,
    greedy_completion,
    interval_sequences,
    j_membership,
    parse_interval,
)


class TestIntervalSpec:
    def test_parse_forms(self):
        spec = parse_interval("]1,2]")
        assert (spec.lower, spec.upper, spec.lower_closed, spec.upper_closed) == (1, 2, False, True)
        spec = parse_interval("[h,inf)", {"h": 0.5})
        assert spec.lower == 0.5 and not spec.bounded and spec.lower_closed

    def test_symbolic_offsets(self):
        spec = parse_interval("[h+1,h+2]", {"h": math.log(2)})
        assert spec.lower == math.log(2) + 1 and spec.upper == math.log(2) + 2

    def test_empty_rejected(self):
        with pytest.raises(EmptyInterval):
            parse_interval("]1,1]")
        with pytest.raises(EmptyInterval):
            parse_interval("[2,1]")

    def test_json_round_trip(self):
        spec = parse_interval("]1.5,inf[")
        assert IntervalSpec.from_json(spec.to_json()) == spec


class TestClearDenominators:
    def test_small_example(self):
        a, b, c = clear_denominators([Fraction(1, 2), Fraction(1, 3)], [Fraction(1, 2), Fraction(1, 6)])
        assert (a, b, c) == ([2, 3], [1, 2], [1, 1])

    def test_all_ones(self):
        assert clear_denominators([Fraction(1)] * 4, [Fraction(1)] * 4) == ([1] * 4, [1] * 4, [1] * 4)

    @given(st.lists(st.tuples(st.integers(1, 50), st.integers(1, 50), st.integers(1, 50), st.integers(1, 50)),
                    min_size=1, max_size=20))
    @settings(max_examples=40, deadline=None)
    def test_exact_identity(self, rows):
        q = [Fraction(x, y) for x, y, _, _ in rows]
        qp = [Fraction(x, y) for _, _, x, y in rows]
        a, b, c = clear_denominators(q, qp)
        product = 1
        for n in range(len(q)):
            product *= a[n]
            assert Fraction(b[n], product) == q[n]
            assert Fraction(c[n], product) == qp[n]
            assert a[n] >= 1 and b[n] >= 1 and c[n] >= 1


class TestIntervalRealisation:
    def test_closed_interval(self):
        t = interval_sequences(parse_interval("[1,2]"))
        assert j_membership(t, 1.5).membership is Membership.MEMBER
        assert j_membership(t, 2.5).membership is Membership.NOT_MEMBER

    def test_half_open(self):
        t = interval_sequences(parse_interval("]1,2]"))
        assert j_membership(t, 1.0).membership is Membership.NOT_MEMBER
        assert j_membership(t, 2.0).membership is Membership.MEMBER

    def test_singleton(self):
        t = interval_sequences(parse_interval("[1.3,1.3]"))
        assert j_membership(t, 1.3).membership is Membership.MEMBER
        assert j_membership(t, 1.2).membership is Membership.NOT_MEMBER
        assert j_membership(t, 1.4).membership is Membership.NOT_MEMBER

    def test_sequences_are_positive_integers(self):
        t = interval_sequences(parse_interval("]1,2["))
        prefix = t.prefix(15)
        for name in "abc":
            assert all(isinstance(x, int) and x >= 1 for x in prefix[name]), name

    def test_converging_sides_have_finite_sums(self):
        t = interval_sequences(parse_interval("[1,2]"))
        report = j_membership(t, 1.5)
        assert math.isfinite(report.b_side.value.hi) and math.isfinite(report.c_side.value.hi)


def _even_stream(D):
    a = lambda n: 1 if n >= 2 and n % 2 == 0 else 0  # noqa: E731
    tail = lambda L: D ** (2 * ((L + 2) // 2)) / (1 - D**2)  # noqa: E731
    return a, tail


class TestGreedyCompletion:
    def test_zero_stream(self):
        D = Fraction(1, 2)
        g = greedy_completion(D, lambda n: 0)
        g.ensure(10)
        assert g.b(1) == 1
        s = g.s_lo
        assert s == g.s_hi == Fraction(1, 2)
        for m in range(1, 11):
            lo, hi = g.gap(m)
            assert 0 < lo and hi <= s / m
        N = g.placements[9].n
        assert 1 - g.partial_sum(N) == s - sum(p.k * D**p.n for p in g.placements[:10])
        assert sum(1 for p in g.placements if p.k >= 2) >= 3

    def test_single_a_term(self):
        D = Fraction(1, 2)
        g = greedy_completion(D, lambda n: 1 if n == 2 else 0)
        g.ensure(6)
        assert g.b(2) >= 1
        assert all(p.n > 2 for p in g.placements)

    def test_precondition_violation(self):
        with pytest.raises(SlackExhausted):
            greedy_completion(Fraction(1, 2), lambda n: 2 if n == 2 else 0)

    def test_bad_base(self):
        with pytest.raises(ValidationError):
            greedy_completion(Fraction(3, 2), lambda n: 0)

    def test_infinite_stream_certified_slack(self):
        D = Fraction(1, 3)
        a, tail = _even_stream(D)
        g = greedy_completion(D, a, tail)
        g.ensure(6)
        lo, hi = g.s_enclosure
        assert 0 < lo <= hi
        assert abs(float(hi) - (1 - 1 / 3 - 1 / 8)) < 1e-12
