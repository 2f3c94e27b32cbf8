"""Sequence triples, their summability intervals, and the greedy series completion.

A triple ``(a, b, c)`` of positive integer sequences determines the set
``J(a, b, c)`` of ``beta`` for which both

    sum_k b_k / (a_1 ... a_k) * exp(-k beta)     and
    sum_k c_k / (a_1 ... a_k) * exp(k beta)

converge. :func:`interval_sequences` produces a triple whose set is a
prescribed interval, and :func:`j_membership` decides membership for such
triples from two-sided envelopes on ``q_k = b_k / (a_1 ... a_k)`` and
``q'_k = c_k / (a_1 ... a_k)``.
"""

from __future__ import annotations

import enum
import math
import re
from collections.abc import Callable
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from .enclosure import INF, Enclosure, down, exp_neg, up
from .errors import EmptyInterval, SlackExhausted, ValidationError


@dataclass(frozen=True)
class IntervalSpec:
    """A non-empty interval of positive reals with open or closed ends."""

    lower: float
    upper: float
    lower_closed: bool
    upper_closed: bool

    def __post_init__(self) -> None:
        if not (self.lower > 0) or math.isnan(self.upper):
            raise EmptyInterval("intervals must have a positive lower end")
        if self.upper < self.lower:
            raise EmptyInterval(f"upper end {self.upper} lies below lower end {self.lower}")
        if math.isinf(self.upper) and self.upper_closed:
            raise ValidationError("an unbounded interval cannot be closed at infinity")
        if self.upper == self.lower and not (self.lower_closed and self.upper_closed):
            raise EmptyInterval("a degenerate interval must be closed at both ends")

    @property
    def bounded(self) -> bool:
        return not math.isinf(self.upper)

    def contains(self, beta: float) -> bool:
        above = beta > self.lower or (self.lower_closed and beta == self.lower)
        below = beta < self.upper or (self.upper_closed and beta == self.upper)
        return above and below

    def __str__(self) -> str:
        left = "[" if self.lower_closed else "]"
        right = "]" if self.upper_closed else "["
        upper = "inf" if math.isinf(self.upper) else repr(self.upper)
        return f"{left}{self.lower!r},{upper}{right}"

    def to_json(self) -> dict:
        return {
            "lower": self.lower,
            "upper": "inf" if math.isinf(self.upper) else self.upper,
            "lower_closed": self.lower_closed,
            "upper_closed": self.upper_closed,
        }

    @classmethod
    def from_json(cls, data: dict) -> IntervalSpec:
        upper = data["upper"]
        return cls(float(data["lower"]), INF if upper == "inf" else float(upper),
                   bool(data["lower_closed"]), bool(data["upper_closed"]))


_INTERVAL = re.compile(r"^\s*([\[\]\(])\s*([^,]+?)\s*,\s*([^,]+?)\s*([\[\]\)])\s*$")
_TERM = re.compile(r"^\s*([a-z]+|[0-9.eE+-]+)\s*(?:([+-])\s*([0-9.eE]+))?\s*$")


def parse_interval(text: str, symbols: dict[str, float] | None = None) -> IntervalSpec:
    """Parse ``"[h,inf)"``, ``"]h+1,h+2["``, ``"(1,2]"`` and similar.

    ``[`` and ``]`` on the left, like ``]`` and ``[`` on the right, follow
    the French convention; round brackets are always open.
    """
    match = _INTERVAL.match(text)
    if not match:
        raise ValidationError(f"cannot parse interval {text!r}")
    left, lo_text, hi_text, right = match.groups()
    symbols = dict(symbols or {})
    lower = _evaluate(lo_text, symbols)
    upper = _evaluate(hi_text, symbols)
    return IntervalSpec(lower, upper, left == "[", right == "]")


def _evaluate(text: str, symbols: dict[str, float]) -> float:
    if text.strip().lower() in ("inf", "+inf", "infinity", "oo"):
        return INF
    match = _TERM.match(text)
    if not match:
        raise ValidationError(f"cannot evaluate interval end {text!r}")
    head, sign, offset = match.groups()
    if head in symbols:
        value = symbols[head]
    else:
        try:
            value = float(head)
        except ValueError:
            raise ValidationError(f"unknown symbol {head!r} in interval end") from None
    if sign:
        value = value + float(offset) if sign == "+" else value - float(offset)
    return value


class _Stream:
    """Memoized positive integer sequence indexed from 1."""

    def __init__(self, rule: Callable[[int], int]) -> None:
        self._rule = rule
        self._cache: dict[int, int] = {}

    def __call__(self, n: int) -> int:
        if n < 1:
            raise IndexError(n)
        if n not in self._cache:
            self._cache[n] = int(self._rule(n))
        return self._cache[n]


@dataclass(frozen=True)
class SideEnvelope:
    """Two-sided bounds on one coefficient sequence of a triple.

    ``kind`` is ``"geometric"`` when ``(x + 1/n)^-n n^-damping <= q_n <=
    x^-n n^-damping`` with ``x = exp(-rate)``, and ``"factorial"`` when
    ``q_n = 1/n!``.
    """

    kind: str
    rate: float = 0.0
    damping: int = 0


class SequenceTriple:
    """Lazy positive integer sequences ``a``, ``b``, ``c`` with ``d_i = c_i a_(i+1) ... a_(2i)``."""

    def __init__(
        self,
        a: Callable[[int], int],
        b: Callable[[int], int],
        c: Callable[[int], int],
        interval: IntervalSpec | None = None,
        b_envelope: SideEnvelope | None = None,
        c_envelope: SideEnvelope | None = None,
    ) -> None:
        self.a = _Stream(a)
        self.b = _Stream(b)
        self.c = _Stream(c)
        self.interval = interval
        self.b_envelope = b_envelope
        self.c_envelope = c_envelope
        self._products = [1]

    @classmethod
    def constant(cls, a: int = 1, b: int = 1, c: int = 1) -> SequenceTriple:
        return cls(lambda n: a, lambda n: b, lambda n: c)

    @classmethod
    def from_lists(cls, a: list[int], b: list[int], c: list[int]) -> SequenceTriple:
        return cls(lambda n: a[n - 1], lambda n: b[n - 1], lambda n: c[n - 1])

    def product(self, n: int) -> int:
        """``a_1 ... a_n``, with the empty product equal to one."""
        while len(self._products) <= n:
            k = len(self._products)
            self._products.append(self._products[-1] * self.a(k))
        return self._products[n]

    def d(self, i: int) -> int:
        return self.c(i) * (self.product(2 * i) // self.product(i))

    def q(self, n: int) -> Fraction:
        return Fraction(self.b(n), self.product(n))

    def q_prime(self, n: int) -> Fraction:
        return Fraction(self.c(n), self.product(n))

    def step_weight(self, k: int) -> int:
        """``t(k) = a_1 ... a_(k-1)`` along the attached exit."""
        return self.product(k - 1)

    def prefix(self, n: int) -> dict[str, list[int]]:
        return {
            "a": [self.a(i) for i in range(1, n + 1)],
            "b": [self.b(i) for i in range(1, n + 1)],
            "c": [self.c(i) for i in range(1, n + 1)],
        }


def clear_denominators(q: list[Fraction], q_prime: list[Fraction]) -> tuple[list[int], list[int], list[int]]:
    """Integers with ``q_n = b_n / (a_1 ... a_n)`` and ``q'_n = c_n / (a_1 ... a_n)``.

    Each ``a_n`` is the least common multiple of the denominators of
    ``a_1 ... a_(n-1) q_n`` and ``a_1 ... a_(n-1) q'_n``, which is the least
    choice that makes ``b_n`` and ``c_n`` integers.
    """
    if len(q) != len(q_prime):
        raise ValidationError("sequences must have equal length")
    a: list[int] = []
    b: list[int] = []
    c: list[int] = []
    product = 1
    for qn, qpn in zip(q, q_prime):
        qn, qpn = Fraction(qn), Fraction(qpn)
        if qn <= 0 or qpn <= 0:
            raise ValidationError("all terms must be positive")
        an = math.lcm((product * qn).denominator, (product * qpn).denominator)
        product *= an
        a.append(an)
        b.append(int(product * qn))
        c.append(int(product * qpn))
    return a, b, c


@contextmanager
def _precision(bits: int):
    old = mpmath.iv.prec
    mpmath.iv.prec = bits
    try:
        with mpmath.workprec(bits):
            yield
    finally:
        mpmath.iv.prec = old


def _floor_scaled(rate: float, n: int, scale: int) -> int:
    """``floor(scale * exp(rate * n))`` computed with rigorous interval arithmetic."""
    prec = 80
    while True:
        with _precision(prec + int(abs(rate) * n * 1.45) + scale.bit_length()):
            value = mpmath.iv.exp(mpmath.iv.mpf(rate) * n) * scale
            lo = int(mpmath.floor(mpmath.mpf(value.a)))
            hi = int(mpmath.floor(mpmath.mpf(value.b)))
        if lo == hi:
            return lo
        prec *= 2
        if prec > 1 << 16:
            raise ValidationError("could not resolve a floor to integer precision")


def _lower_envelope_upper_bound(rate: float, n: int) -> Fraction:
    """Upper end of an interval enclosing ``(exp(-rate) + 1/n)^-n``."""
    with _precision(80 + int(abs(rate) * n * 1.45)):
        x = mpmath.iv.exp(-mpmath.iv.mpf(rate))
        value = (x + mpmath.iv.mpf(1) / n) ** (-n)
        return _to_fraction(mpmath.mpf(value.b))


def _to_fraction(x: mpmath.mpf) -> Fraction:
    man, exp = x.man_exp
    return Fraction(int(man)) * Fraction(2) ** int(exp)


def envelope_target(rate: float, n: int) -> Fraction:
    """A rational in ``[(x + 1/n)^-n, x^-n]`` for ``x = exp(-rate)``.

    The value is ``floor(K x^-n) / K`` with ``K = 2 n^2 2^e`` and ``e >= 0``
    the least exponent that keeps it above the lower end.
    """
    bound = _lower_envelope_upper_bound(rate, n)

    def value(e: int) -> Fraction:
        scale = 2 * n * n * 2**e
        return Fraction(_floor_scaled(rate, n, scale), scale)

    # Doubling the scale never lowers the floor, so the test is monotone in e.
    if value(0) >= bound and value(0) > 0:
        return value(0)
    low, high = 0, 1
    while not (value(high) >= bound and value(high) > 0):
        low, high = high, 2 * high
    while high - low > 1:
        mid = (low + high) // 2
        if value(mid) >= bound and value(mid) > 0:
            high = mid
        else:
            low = mid
    return value(high)


def interval_sequences(interval: IntervalSpec) -> SequenceTriple:
    """A triple with ``J(a, b, c)`` equal to ``interval``.

    ``q_n`` targets ``exp(r n)`` and ``q'_n`` targets ``exp(-R n)``; each side
    is damped by ``n^-2`` exactly when the corresponding end is closed, and
    an unbounded interval uses ``q'_n = 1/n!``.
    """
    r, R = interval.lower, interval.upper
    b_env = SideEnvelope("geometric", rate=r, damping=2 if interval.lower_closed else 0)
    if interval.bounded:
        c_env = SideEnvelope("geometric", rate=-R, damping=2 if interval.upper_closed else 0)
    else:
        c_env = SideEnvelope("factorial")

    q_cache: dict[int, tuple[Fraction, Fraction]] = {}
    rows: list[tuple[int, int, int]] = []

    def q_pair(n: int) -> tuple[Fraction, Fraction]:
        if n not in q_cache:
            q_cache[n] = (_side_value(b_env, n), _side_value(c_env, n))
        return q_cache[n]

    state = {"product": 1}

    def extend(n: int) -> None:
        while len(rows) < n:
            k = len(rows) + 1
            qn, qpn = q_pair(k)
            product = state["product"]
            an = math.lcm((product * qn).denominator, (product * qpn).denominator)
            product *= an
            state["product"] = product
            rows.append((an, int(product * qn), int(product * qpn)))

    def pick(i: int) -> Callable[[int], int]:
        def rule(n: int) -> int:
            extend(n)
            return rows[n - 1][i]
        return rule

    return SequenceTriple(pick(0), pick(1), pick(2), interval, b_env, c_env)


def _side_value(env: SideEnvelope, n: int) -> Fraction:
    if env.kind == "factorial":
        return Fraction(1, math.factorial(n))
    return envelope_target(env.rate, n) / n**env.damping


class Membership(enum.Enum):
    MEMBER = "member"
    NOT_MEMBER = "not_member"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class SideVerdict:
    converges: bool | None
    value: Enclosure


@dataclass(frozen=True)
class MembershipReport:
    membership: Membership
    b_side: SideVerdict
    c_side: SideVerdict


def _converges(env: SideEnvelope, beta: float, sign: int) -> bool:
    """Convergence of ``sum q_n exp(sign n beta)`` read off the envelope.

    Above and below the critical value the terms decay geometrically or
    grow without bound; at the critical value the lower envelope keeps the
    undamped terms above ``exp(-1/x)``, while the damped ones are summable.
    """
    if env.kind == "factorial":
        return True
    critical = env.rate if sign < 0 else -env.rate
    if beta == critical:
        return env.damping >= 2
    return (beta > critical) if sign < 0 else (beta < critical)


def _side_tail(env: SideEnvelope, beta: float, sign: int, L: int) -> float:
    """Upper bound on ``sum_{n > L} q_n exp(sign n beta)`` for a convergent side."""
    if env.kind == "factorial":
        growth = math.exp(beta * sign) * (1 + 1e-12)
        if L + 1 <= 2 * growth:
            return INF
        log_term = (L + 1) * math.log(growth) - math.lgamma(L + 2)
        return up(2.0 * math.exp(log_term) * (1 + 1e-9))
    critical = env.rate if sign < 0 else -env.rate
    excess = (beta - critical) if sign < 0 else (critical - beta)
    if excess == 0:
        return up(1.0 / L)
    rho = exp_neg(down(excess)).hi
    if rho >= 1.0:
        return INF
    return up(up(rho ** (L + 1) * (1 + 1e-12)) / down(1.0 - rho))


def side_sum(triple: SequenceTriple, beta: float, sign: int, L: int) -> Enclosure:
    """Partial sum to ``L`` of the ``b`` side (``sign = -1``) or ``c`` side (``sign = +1``)."""
    x = exp_neg(-sign * beta)
    total = Enclosure.zero()
    power = Enclosure(1.0, 1.0)
    for n in range(1, L + 1):
        power = power * x
        coeff = triple.q(n) if sign < 0 else triple.q_prime(n)
        total = total + power * Enclosure.point(coeff)
    return total


def j_membership(triple: SequenceTriple, beta: float, L: int = 60) -> MembershipReport:
    """Decide ``beta in J(a, b, c)`` for a triple built by :func:`interval_sequences`."""
    sides = []
    for env, sign in ((triple.b_envelope, -1), (triple.c_envelope, 1)):
        if env is None:
            sides.append(SideVerdict(None, Enclosure.unbounded_above()))
            continue
        partial = side_sum(triple, beta, sign, L)
        if _converges(env, beta, sign):
            tail = _side_tail(env, beta, sign, L)
            sides.append(SideVerdict(True, Enclosure(partial.lo, up(partial.hi + tail))))
        else:
            sides.append(SideVerdict(False, Enclosure(partial.lo, INF)))
    verdicts = [s.converges for s in sides]
    if None in verdicts:
        kind = Membership.NOT_MEMBER if False in verdicts else Membership.INDETERMINATE
    else:
        kind = Membership.MEMBER if all(verdicts) else Membership.NOT_MEMBER
    return MembershipReport(kind, sides[0], sides[1])


@dataclass(frozen=True)
class Placement:
    index: int
    n: int
    k: int


@dataclass
class GreedyCompletion:
    """Integers ``b_n >= a_n`` with ``b_1 = 1`` and ``sum b_n D^n = 1``.

    The slack ``s = 1 - D - sum a_n D^n`` is known only through the
    enclosure ``[1 - D - P_L - T_L, 1 - D - P_L]`` from the prefix ``P_L``
    and the tail bound ``T_L``. Every choice below is monotone in ``s``, so a
    choice that agrees at both ends of the enclosure is the exact choice;
    otherwise the prefix is doubled.

    With ``s_m = s (1 - 2^-m)`` and ``gap_m = s_m - sum_{i <= m} k_i D^(n_i)``:

    * ``r_m = max(1, ceil(m (m log 2 - log s)))``;
    * ``n_1`` is the least ``n >= max(r_1, 2)`` with ``D^n < s_1`` and ``k_1``
      the largest integer with ``k_1 D^(n_1) < s_1``;
    * for ``m >= 2``, ``n_m`` is the least ``n > max(r_m, n_(m-1))`` with
      ``3 D^n <= gap_(m-1) / m`` and ``k_m`` the least integer with
      ``k_m D^(n_m) > s 2^-m + (m-1)/m gap_(m-1)``.
    """

    D: Fraction
    a: Callable[[int], int]
    a_tail: Callable[[int], Fraction]
    prefix_length: int = 64
    max_prefix: int = 1 << 13
    placements: list[Placement] = field(default_factory=list)
    _a_partials: list = field(default_factory=lambda: [Fraction(0)], repr=False)

    def __post_init__(self) -> None:
        self.D = Fraction(self.D)
        if not (0 < self.D < 1):
            raise ValidationError("D must lie strictly between 0 and 1")
        if self.a(1) != 0:
            raise ValidationError("the a-stream starts at n = 2")
        self._refresh()

    def _a_partial(self, L: int) -> Fraction:
        while len(self._a_partials) <= L:
            n = len(self._a_partials)
            self._a_partials.append(self._a_partials[-1] + self.a(n) * self.D**n)
        return self._a_partials[L]

    def _refresh(self) -> None:
        while True:
            L = self.prefix_length
            head = self._a_partial(L)
            tail = Fraction(self.a_tail(L))
            self.s_hi = 1 - self.D - head
            self.s_lo = self.s_hi - tail
            if self.s_hi <= 0:
                raise SlackExhausted("sum of a_n D^n is not below 1 - D")
            if self.s_lo > 0:
                return
            self._grow()

    def _grow(self) -> None:
        if self.prefix_length >= self.max_prefix:
            raise SlackExhausted("could not certify the slack to the required precision")
        self.prefix_length *= 2
        self._refresh_bounds_only()

    def _refresh_bounds_only(self) -> None:
        L = self.prefix_length
        head = self._a_partial(L)
        self.s_hi = 1 - self.D - head
        self.s_lo = self.s_hi - Fraction(self.a_tail(L))
        if self.s_hi <= 0:
            raise SlackExhausted("sum of a_n D^n is not below 1 - D")

    @property
    def s_enclosure(self) -> tuple[Fraction, Fraction]:
        return self.s_lo, self.s_hi

    def _sigma(self, m: int) -> Fraction:
        return sum((p.k * self.D**p.n for p in self.placements[:m]), Fraction(0))

    def _decide(self, s: Fraction, m: int) -> tuple[int, int]:
        D = self.D
        r_m = max(1, math.ceil(m * (m * math.log(2) - math.log(float(s)))))
        s_m = s * (1 - Fraction(1, 2**m))
        if m == 1:
            n = max(r_m, 2)
            while not D**n < s_m:
                n += 1
            k = -((-s_m) // D**n) - 1
            return n, int(k)
        prev = self.placements[m - 2]
        gap = s * (1 - Fraction(1, 2 ** (m - 1))) - self._sigma(m - 1)
        n = max(r_m, prev.n) + 1
        while not 3 * D**n <= gap / m:
            n += 1
        k = (s / 2**m + Fraction(m - 1, m) * gap) // D**n + 1
        return n, int(k)

    def ensure(self, m: int) -> list[Placement]:
        """Compute placements up to the ``m``-th."""
        while len(self.placements) < m:
            index = len(self.placements) + 1
            while True:
                if self.s_lo > 0:
                    low = self._decide(self.s_lo, index)
                    high = self._decide(self.s_hi, index)
                    if low == high:
                        break
                self._grow()
            self.placements.append(Placement(index, *low))
        return self.placements[:m]

    def ensure_length(self, n: int) -> None:
        """Compute placements until every ``n_m <= n`` is known."""
        while not self.placements or self.placements[-1].n < n:
            self.ensure(len(self.placements) + 1)

    def c(self, n: int) -> int:
        if n < 2:
            return 0
        self.ensure_length(n)
        for p in self.placements:
            if p.n == n:
                return p.k
        return 0

    def b(self, n: int) -> int:
        if n < 1:
            raise IndexError(n)
        if n == 1:
            return 1
        return self.a(n) + self.c(n)

    def gap(self, m: int) -> tuple[Fraction, Fraction]:
        """Enclosure of ``s_m - sum_{i <= m} k_i D^(n_i)``."""
        self.ensure(m)
        sigma = self._sigma(m)
        factor = 1 - Fraction(1, 2**m)
        return self.s_lo * factor - sigma, self.s_hi * factor - sigma

    def partial_sum(self, N: int) -> Fraction:
        """``sum_{n <= N} b_n D^n`` in exact arithmetic."""
        return sum((self.b(n) * self.D**n for n in range(1, N + 1)), Fraction(0))


def greedy_completion(
    D: Fraction | float,
    a: Callable[[int], int],
    a_tail: Callable[[int], Fraction] | None = None,
) -> GreedyCompletion:
    """Greedy completion of ``a`` to a sequence with ``sum b_n D^n = 1``.

    ``a_tail(L)`` must bound ``sum_{n > L} a_n D^n`` from above. Omitting it
    declares that ``a`` vanishes beyond every prefix the completion reads.
    """
    if a_tail is None:
        a_tail = lambda L: Fraction(0)  # noqa: E731
    return GreedyCompletion(Fraction(D), a, a_tail)
