"""Scalar inf-sup interval arithmetic.

Endpoints are rounded outward exactly: the sign of the error-free remainder
decides whether the round-to-nearest result already lies on the correct
side. Only when the remainder cannot be trusted (underflow range) do we fall
back to an unconditional one-ulp bump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .eft import _UNDERFLOW_RISK, _two_prod, _two_sum

_INF = math.inf
_MAXF = 1.7976931348623157e308


class IntervalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise IntervalError("interval endpoint is NaN")
        if self.lo > self.hi:
            raise IntervalError(f"invalid interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(float(x), float(x))

    @property
    def mid(self) -> float:
        if math.isinf(self.lo) or math.isinf(self.hi):
            return 0.0 if self.lo == -self.hi else (self.lo if math.isinf(self.hi) else self.hi)
        return 0.5 * self.lo + 0.5 * self.hi

    @property
    def rad(self) -> float:
        m = self.mid
        return max(sub_up(self.hi, m), sub_up(m, self.lo))

    @property
    def mag(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    @property
    def mig(self) -> float:
        if self.lo <= 0.0 <= self.hi:
            return 0.0
        return min(abs(self.lo), abs(self.hi))

    def __contains__(self, x) -> bool:
        if isinstance(x, Interval):
            return self.lo <= x.lo and x.hi <= self.hi
        if isinstance(x, Fraction):
            lo = -_INF if math.isinf(self.lo) else Fraction(self.lo)
            hi = _INF if math.isinf(self.hi) else Fraction(self.hi)
            return lo <= x <= hi
        return self.lo <= x <= self.hi

    def __add__(self, other):
        return iv_add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return iv_sub(self, _coerce(other))

    def __rsub__(self, other):
        return iv_sub(_coerce(other), self)

    def __mul__(self, other):
        return iv_mul(self, _coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return iv_div(self, _coerce(other))

    def __rtruediv__(self, other):
        return iv_div(_coerce(other), self)

    def __neg__(self):
        return Interval(-self.hi, -self.lo)


def _coerce(x) -> Interval:
    return x if isinstance(x, Interval) else Interval.point(float(x))


# -- directed scalar operations -------------------------------------------

def _fix(r: float, inputs_finite: bool, downward: bool) -> float:
    if math.isnan(r):
        return -_INF if downward else _INF
    if math.isinf(r) and inputs_finite:
        # overflow of an exact finite result: saturate on the safe side
        if downward and r > 0:
            return _MAXF
        if not downward and r < 0:
            return -_MAXF
    return r


def add_down(a: float, b: float) -> float:
    s, e = _two_sum(a, b)
    if e < 0.0:
        s = math.nextafter(s, -_INF)
    return _fix(s, math.isfinite(a) and math.isfinite(b), True)


def add_up(a: float, b: float) -> float:
    s, e = _two_sum(a, b)
    if e > 0.0:
        s = math.nextafter(s, _INF)
    return _fix(s, math.isfinite(a) and math.isfinite(b), False)


def sub_down(a: float, b: float) -> float:
    return add_down(a, -b)


def sub_up(a: float, b: float) -> float:
    return add_up(a, -b)


def _mul_dir(a: float, b: float, downward: bool) -> float:
    if a == 0.0 or b == 0.0:
        return 0.0  # includes the 0 * inf corner convention
    p = a * b
    finite = math.isfinite(a) and math.isfinite(b)
    if not finite or not math.isfinite(p):
        return _fix(p, finite, downward)
    if abs(p) < _UNDERFLOW_RISK or abs(a) > 2.0 ** 995 or abs(b) > 2.0 ** 995:
        return math.nextafter(p, -_INF if downward else _INF)
    _, e = _two_prod(a, b)
    if downward and e < 0.0:
        p = math.nextafter(p, -_INF)
    elif not downward and e > 0.0:
        p = math.nextafter(p, _INF)
    return p


def mul_down(a: float, b: float) -> float:
    return _mul_dir(a, b, True)


def mul_up(a: float, b: float) -> float:
    return _mul_dir(a, b, False)


def _div_dir(a: float, b: float, downward: bool) -> float:
    if a == 0.0:
        return 0.0
    q = a / b
    finite = math.isfinite(a) and math.isfinite(b)
    if not finite or not math.isfinite(q):
        return _fix(q, finite, downward)
    if q == 0.0:
        # exact quotient is a nonzero number below the subnormal range
        positive = (a > 0.0) == (b > 0.0)
        if downward:
            return 0.0 if positive else -2.0 ** -1074
        return 2.0 ** -1074 if positive else 0.0
    if (abs(q) < 2.0 ** -960 or abs(q) > 2.0 ** 995 or abs(b) > 2.0 ** 995
            or abs(a) < _UNDERFLOW_RISK):
        # the remainder a - q*b may not be exact here
        return math.nextafter(q, -_INF if downward else _INF)
    # sign of a/b - q equals sign((a - q*b) / b)
    p, e = _two_prod(q, b)
    r = math.fsum((a, -p, -e))
    if b < 0.0:
        r = -r
    if downward and r < 0.0:
        q = math.nextafter(q, -_INF)
    elif not downward and r > 0.0:
        q = math.nextafter(q, _INF)
    return q


def div_down(a: float, b: float) -> float:
    return _div_dir(a, b, True)


def div_up(a: float, b: float) -> float:
    return _div_dir(a, b, False)


def _sqrt_scaled(x: float):
    """(r, k, xs) with xs = x * 4**-k in [1, 4) and r = fl(sqrt(xs))."""
    _, e = math.frexp(x)
    k = (e - 1) // 2
    xs = math.ldexp(x, -2 * k)
    return math.sqrt(xs), k, xs


def sqrt_up(x: float) -> float:
    """Smallest binary64 r with r*r >= x (for finite x >= 0)."""
    if x < 0.0 or math.isnan(x):
        raise IntervalError("sqrt_up of a negative number")
    if x == 0.0 or math.isinf(x):
        return x
    # scaling by a power of four keeps the square root exact up to 2**k
    r, k, xs = _sqrt_scaled(x)
    p, e = _two_prod(r, r)
    if math.fsum((p, e, -xs)) < 0.0:
        r = math.nextafter(r, _INF)
    return math.ldexp(r, k)


def sqrt_down(x: float) -> float:
    """Largest binary64 r >= 0 with r*r <= x."""
    if x < 0.0 or math.isnan(x):
        raise IntervalError("sqrt_down of a negative number")
    if x == 0.0 or math.isinf(x):
        return x
    r, k, xs = _sqrt_scaled(x)
    p, e = _two_prod(r, r)
    if math.fsum((p, e, -xs)) > 0.0:
        r = math.nextafter(r, -_INF)
    return math.ldexp(r, k)


# -- interval operations ---------------------------------------------------

def iv_add(x: Interval, y: Interval) -> Interval:
    return Interval(add_down(x.lo, y.lo), add_up(x.hi, y.hi))


def iv_sub(x: Interval, y: Interval) -> Interval:
    return Interval(sub_down(x.lo, y.hi), sub_up(x.hi, y.lo))


def iv_mul(x: Interval, y: Interval, sharp: bool = True) -> Interval:
    """Interval product.

    ``sharp=True`` evaluates the four corner products with exact directed
    rounding. ``sharp=False`` uses the cheaper midpoint-radius form, which
    is never narrower than the sharp result but always encloses it.
    """
    if sharp or not all(map(math.isfinite, (x.lo, x.hi, y.lo, y.hi))):
        los = [mul_down(a, b) for a in (x.lo, x.hi) for b in (y.lo, y.hi)]
        his = [mul_up(a, b) for a in (x.lo, x.hi) for b in (y.lo, y.hi)]
        return Interval(min(los), max(his))
    xm, xr = x.mid, x.rad
    ym, yr = y.mid, y.rad
    m = xm * ym
    # |x*y - m| <= |xm| yr + xr |ym| + xr yr + |xm ym - m|
    r = add_up(mul_up(abs(xm), yr), mul_up(xr, add_up(abs(ym), yr)))
    r = add_up(r, mul_up(abs(m), 2.0 ** -53))
    r = add_up(r, 2.0 ** -1074)
    lo = sub_down(m, r)
    hi = add_up(m, r)
    return Interval(lo, hi)


def iv_div(x: Interval, y: Interval) -> Interval:
    if y.lo <= 0.0 <= y.hi:
        raise IntervalError("division by an interval containing zero")
    los = [div_down(a, b) for a in (x.lo, x.hi) for b in (y.lo, y.hi)]
    his = [div_up(a, b) for a in (x.lo, x.hi) for b in (y.lo, y.hi)]
    return Interval(min(los), max(his))


def iv_sqrt(x: Interval) -> Interval:
    if x.lo < 0.0:
        raise IntervalError("sqrt of an interval with negative members")
    return Interval(sqrt_down(x.lo), sqrt_up(x.hi))


def hull(*xs: Interval) -> Interval:
    return Interval(min(x.lo for x in xs), max(x.hi for x in xs))
