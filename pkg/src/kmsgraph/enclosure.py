"""Certified real enclosures.

An :class:`Enclosure` is a closed interval ``[lo, hi]`` of extended reals that
is guaranteed to contain a true value. Every operation rounds outward, so
the containment survives floating point arithmetic. Products follow the
measure theoretic convention ``0 * inf = inf * 0 = 0``, which is what matrix
powers of weighted adjacency matrices need.

Scalar operations use ``math.nextafter`` after any inexact step. Matrix
products of non-negative interval matrices are done with numpy and widened
by the a priori bound ``gamma_n = n u / (1 - n u)`` on the relative error of a
length ``n`` dot product with non-negative terms, which is rigorous because
no cancellation can occur.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

INF = math.inf
_UNIT_ROUNDOFF = 2.0**-53
_TINY = 5e-324


def down(x: float) -> float:
    return math.nextafter(x, -INF)


def up(x: float) -> float:
    return math.nextafter(x, INF)


def _exact_sum(a: float, b: float) -> tuple[float, bool]:
    s = a + b
    if math.isinf(s) or math.isnan(s):
        return s, True
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err == 0.0


def _mul0(a: float, b: float) -> float:
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


def _exact_product(a: float, b: float) -> tuple[float, bool]:
    p = _mul0(a, b)
    if p == 0.0 and (a == 0.0 or b == 0.0):
        return 0.0, True
    if math.isinf(p):
        return p, math.isinf(a) or math.isinf(b)
    if abs(a) == 1.0 or abs(b) == 1.0:
        return p, True
    return p, Fraction(a) * Fraction(b) == Fraction(p)


def _round_lo(value: float, exact: bool) -> float:
    return value if exact else down(value)


def _round_hi(value: float, exact: bool) -> float:
    return value if exact else up(value)


@dataclass(frozen=True, slots=True)
class Enclosure:
    """Closed interval ``[lo, hi]`` known to contain a true real value."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("enclosure endpoints must not be NaN")
        if self.lo > self.hi:
            raise ValueError(f"empty enclosure [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x: float | int | Fraction) -> Enclosure:
        """Enclose an exact number, widening by one ulp when it is not a float."""
        if isinstance(x, float):
            return cls(x, x)
        f = float(x)
        if Fraction(f) == Fraction(x):
            return cls(f, f)
        if Fraction(f) < Fraction(x):
            return cls(f, up(f))
        return cls(down(f), f)

    @classmethod
    def around(cls, x: float, ulps: int = 1) -> Enclosure:
        """Enclose a value computed by a libm call that is accurate to one ulp."""
        lo = hi = x
        for _ in range(ulps):
            lo, hi = down(lo), up(hi)
        return cls(lo, hi)

    @classmethod
    def zero(cls) -> Enclosure:
        return cls(0.0, 0.0)

    @classmethod
    def unbounded_above(cls, lo: float = 0.0) -> Enclosure:
        return cls(lo, INF)

    @property
    def width(self) -> float:
        if math.isinf(self.hi) or math.isinf(self.lo):
            return INF
        return up(self.hi - self.lo)

    @property
    def mid(self) -> float:
        if math.isinf(self.hi):
            return INF
        return 0.5 * (self.lo + self.hi)

    @property
    def is_finite(self) -> bool:
        return not math.isinf(self.hi) and not math.isinf(self.lo)

    def relative_width(self) -> float:
        if not self.is_finite:
            return INF
        scale = max(abs(self.lo), abs(self.hi))
        return 0.0 if scale == 0.0 else self.width / scale

    def contains(self, x: float | Fraction) -> bool:
        if isinstance(x, Fraction):
            lo_ok = math.isinf(self.lo) or Fraction(self.lo) <= x
            hi_ok = math.isinf(self.hi) or x <= Fraction(self.hi)
            return lo_ok and hi_ok
        return self.lo <= x <= self.hi

    def intersects(self, other: Enclosure) -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def intersection(self, other: Enclosure) -> Enclosure:
        return Enclosure(max(self.lo, other.lo), min(self.hi, other.hi))

    def hull(self, other: Enclosure) -> Enclosure:
        return Enclosure(min(self.lo, other.lo), max(self.hi, other.hi))

    def certainly_below(self, x: float) -> bool:
        return self.hi < x

    def certainly_above(self, x: float) -> bool:
        return self.lo > x

    def __add__(self, other: Enclosure | float) -> Enclosure:
        other = _coerce(other)
        lo, lo_exact = _exact_sum(self.lo, other.lo)
        hi, hi_exact = _exact_sum(self.hi, other.hi)
        return Enclosure(_round_lo(lo, lo_exact), _round_hi(hi, hi_exact))

    __radd__ = __add__

    def __neg__(self) -> Enclosure:
        return Enclosure(-self.hi, -self.lo)

    def __sub__(self, other: Enclosure | float) -> Enclosure:
        return self + (-_coerce(other))

    def __rsub__(self, other: float) -> Enclosure:
        return _coerce(other) - self

    def __mul__(self, other: Enclosure | float) -> Enclosure:
        other = _coerce(other)
        candidates_lo = []
        candidates_hi = []
        for a in (self.lo, self.hi):
            for b in (other.lo, other.hi):
                p, exact = _exact_product(a, b)
                candidates_lo.append(_round_lo(p, exact))
                candidates_hi.append(_round_hi(p, exact))
        return Enclosure(min(candidates_lo), max(candidates_hi))

    __rmul__ = __mul__

    def reciprocal(self) -> Enclosure:
        if self.lo <= 0.0 <= self.hi:
            raise ZeroDivisionError("reciprocal of an enclosure containing zero")
        if self.lo > 0.0:
            lo = 0.0 if math.isinf(self.hi) else down(1.0 / self.hi)
            return Enclosure(lo, up(1.0 / self.lo))
        return -((-self).reciprocal())

    def __truediv__(self, other: Enclosure | float) -> Enclosure:
        return self * _coerce(other).reciprocal()

    def __rtruediv__(self, other: float) -> Enclosure:
        return _coerce(other) * self.reciprocal()

    def log(self) -> Enclosure:
        if self.lo < 0.0:
            raise ValueError("log of a possibly negative enclosure")
        lo = -INF if self.lo == 0.0 else down(down(math.log(self.lo)))
        hi = INF if math.isinf(self.hi) else up(up(math.log(self.hi)))
        if self.hi == 0.0:
            hi = -INF
        return Enclosure(lo, hi)

    def clamp_nonnegative(self) -> Enclosure:
        return Enclosure(max(self.lo, 0.0), max(self.hi, 0.0))

    def to_json(self) -> dict[str, float | str]:
        return {"lo": self.lo, "hi": "inf" if math.isinf(self.hi) else self.hi}

    @classmethod
    def from_json(cls, data: dict) -> Enclosure:
        hi = data["hi"]
        return cls(float(data["lo"]), INF if hi == "inf" else float(hi))

    def __repr__(self) -> str:
        return f"Enclosure({self.lo!r}, {self.hi!r})"


def _coerce(x: Enclosure | float | int | Fraction) -> Enclosure:
    if isinstance(x, Enclosure):
        return x
    return Enclosure.point(x)


def exp_neg(x: float | Enclosure) -> Enclosure:
    """Enclose ``exp(-x)`` for a real or an enclosure of reals."""
    x = _coerce(x)
    lo = 0.0 if math.isinf(x.hi) else down(down(math.exp(-x.hi)))
    hi = INF if math.isinf(x.lo) and x.lo < 0 else up(up(math.exp(-x.lo)))
    if x.lo == 0.0:
        hi = 1.0
    if x.hi == 0.0:
        lo = 1.0
    return Enclosure(max(lo, 0.0), hi)


def weight_enclosure(beta: float, f_value: float) -> Enclosure:
    """Enclose ``exp(-beta * F)`` including the rounding of the product."""
    p, exact = _exact_product(beta, f_value)
    product = Enclosure(_round_lo(p, exact), _round_hi(p, exact))
    return exp_neg(product)


def enclosure_sum(items) -> Enclosure:
    total = Enclosure.zero()
    for item in items:
        total = total + item
    return total


def _gamma(n: int) -> float:
    nu = (n + 2) * _UNIT_ROUNDOFF
    return up(nu / (1.0 - nu))


def _clean(arr: np.ndarray) -> np.ndarray:
    # NaN can only arise from 0 * inf, which the convention sets to 0.
    return np.nan_to_num(arr, nan=0.0, posinf=INF)


def imatmul(a_lo: np.ndarray, a_hi: np.ndarray, b_lo: np.ndarray, b_hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Product of non-negative interval matrices (or matrix times vector)."""
    n = a_lo.shape[-1]
    g = _gamma(n)
    with np.errstate(invalid="ignore", over="ignore"):
        lo = _clean(a_lo @ b_lo)
        hi = _clean(_inf_safe_matmul(a_hi, b_hi))
        lo = np.nextafter(lo * (1.0 - g), 0.0)
        hi = np.nextafter(hi * (1.0 + g) + n * _TINY, INF)
    lo = np.maximum(lo, 0.0)
    return lo, hi


def _inf_safe_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if np.isfinite(a).all() and np.isfinite(b).all():
        return a @ b
    # Honour 0 * inf = 0 explicitly.
    a2 = a[..., :, None] if b.ndim > 1 else a
    if b.ndim == 1:
        prod = np.where((a == 0.0) | (b[None, :] == 0.0), 0.0, a * b[None, :])
        return prod.sum(axis=-1)
    prod = np.where((a2 == 0.0) | (b[None, :, :] == 0.0), 0.0, a2 * b[None, :, :])
    return prod.sum(axis=1)


def iadd(a_lo: np.ndarray, a_hi: np.ndarray, b_lo: np.ndarray, b_hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    with np.errstate(invalid="ignore", over="ignore"):
        lo = np.nextafter(a_lo + b_lo, -INF)
        hi = np.nextafter(a_hi + b_hi, INF)
    lo = np.where((a_lo == 0.0) & (b_lo == 0.0), 0.0, lo)
    hi = np.where((a_hi == 0.0) & (b_hi == 0.0), 0.0, hi)
    return np.maximum(lo, 0.0), hi
