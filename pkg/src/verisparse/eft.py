"""Error-free transformations and rounding helpers.

All routines work in round-to-nearest binary64 and never touch the FPU
rounding mode. Directed rounding is obtained either exactly (sign of the
error-free remainder) or by bumping one ulp outward.

Every function accepts Python floats or numpy arrays unless noted.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

UNIT_ROUNDOFF = 2.0 ** -53
ETA = 2.0 ** -1074  # smallest positive subnormal
REALMIN = 2.0 ** -1022
_SPLITTER = 134217729.0  # 2**27 + 1
# products whose magnitude falls below this may lose bits of the EFT error term
_UNDERFLOW_RISK = 2.0 ** -968
# generous per-product allowance for that case
UNDERFLOW_ALLOWANCE = 2.0 ** -1020


class ErrorFreePair(NamedTuple):
    value: float
    error: float


def up(x):
    """Next binary64 toward +inf (one-ulp outward bump)."""
    return np.nextafter(x, np.inf)


def down(x):
    """Next binary64 toward -inf."""
    return np.nextafter(x, -np.inf)


def _two_sum(a, b):
    s = a + b
    bb = s - a
    e = (a - (s - bb)) + (b - bb)
    return s, e


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    e = al * bl - (((p - ah * bh) - al * bh) - ah * bl)
    return p, e


def two_sum(a, b) -> ErrorFreePair:
    """Return (s, e) with s = fl(a + b) and s + e == a + b exactly."""
    s, e = _two_sum(a, b)
    return ErrorFreePair(s, e)


def two_prod(a, b) -> ErrorFreePair:
    """Return (p, e) with p = fl(a * b) and p + e == a * b exactly.

    Uses Veltkamp splitting (no FMA is available from the stdlib on 3.10).
    Exact as long as |a|, |b| < 2**996 and the product does not underflow.
    """
    p, e = _two_prod(a, b)
    if np.ndim(p) == 0:
        if not math.isfinite(p):
            return ErrorFreePair(float(p), 0.0)
        return ErrorFreePair(float(p), float(e))
    e = np.where(np.isfinite(p), e, 0.0)
    return ErrorFreePair(p, e)


def product_is_exact_safe(p) -> bool | np.ndarray:
    """True where the two_prod error term is guaranteed exact."""
    return np.abs(p) >= _UNDERFLOW_RISK


def gamma(k: int) -> float:
    """Upper bound on gamma_k = k u / (1 - k u)."""
    if k <= 0:
        return 0.0
    ku = k * UNIT_ROUNDOFF  # exact for k < 2**53
    if ku >= 0.5:
        raise ValueError(f"gamma({k}) undefined: k*u >= 1/2")
    return float(up(ku / down(1.0 - ku)))


def inflate_sum_bound(k: int) -> float:
    """Factor f >= 1/(1 - gamma_k): a fl-sum of k nonnegative terms times f
    bounds the exact sum from above."""
    g = gamma(k)
    return float(up(1.0 / down(1.0 - g)))


def dot_compensated(x, y) -> ErrorFreePair:
    """Dot product as if computed in twice the working precision (Dot2).

    Returns the pair (value, error) where ``value = fl(s + c)`` and
    ``error`` is the part of ``s + c`` lost by that final rounding.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("dot_compensated: length mismatch")
    s = 0.0
    c = 0.0
    for p, e in zip(*_two_prod(x, y)):
        s, t = _two_sum(s, float(p))
        c += t + float(e)
    v, err = _two_sum(s, c)
    return ErrorFreePair(float(v), float(err))


def _extract(terms, groups, ngroups, big_m):
    """Split terms into high parts (summed exactly) and low remainders."""
    absum = np.bincount(groups, weights=np.abs(terms), minlength=ngroups)
    # 2**e > absum >= (1 - gamma) * exact sum, so 2**(e + 1) exceeds every |term|
    _, e = np.frexp(absum)
    sigma = np.ldexp(1.0, e + 1 + big_m)
    ok = np.isfinite(sigma) & np.isfinite(absum)
    sg = np.where(ok, sigma, 0.0)[groups]
    q = (sg + terms) - sg
    tau = np.bincount(groups, weights=q, minlength=ngroups)  # exact
    return tau, terms - q, ok


def grouped_sum(terms: np.ndarray, groups: np.ndarray, ngroups: int, levels: int = 2):
    """Accurate summation of many independent groups at once.

    Each group is split against a power of two ``sigma`` above its magnitude:
    the high parts are multiples of ``u * sigma`` whose partial sums all fit
    in a double, so they add up exactly in any order. The low parts go
    through the same split ``levels`` times; what is left is summed plainly
    with an a-priori error bound.

    Parameters
    ----------
    terms : float array
    groups : int array, same length, values in [0, ngroups)
    ngroups : int
    levels : int
        Number of exact extraction passes.

    Returns
    -------
    res, err : float arrays of length ``ngroups``
        ``|sum(terms[groups == g]) - res[g]| <= err[g]`` rigorously, and
        ``err[g] == 0`` whenever ``res[g]`` is the exact sum.
    """
    terms = np.asarray(terms, dtype=np.float64)
    groups = np.asarray(groups, dtype=np.int64)
    if terms.size == 0:
        return np.zeros(ngroups), np.zeros(ngroups)
    with np.errstate(over="ignore", invalid="ignore"):
        return _grouped_sum(terms, groups, ngroups, levels)


def _grouped_sum(terms, groups, ngroups, levels):
    m = int(np.bincount(groups, minlength=ngroups).max())
    big_m = int(math.ceil(math.log2(m + 2)))
    g = gamma(max(m, 1))
    f = inflate_sum_bound(max(m, 1))
    hi = np.zeros(ngroups)
    lo = np.zeros(ngroups)
    low = terms
    ok = np.ones(ngroups, dtype=bool)
    for _ in range(levels):
        tau, low, ok_l = _extract(low, groups, ngroups, big_m)
        ok &= ok_l
        # hi + lo carries the running exact total of the extracted parts
        hi, e1 = _two_sum(hi, tau)
        lo, e2 = _two_sum(lo, e1)
        ok &= e2 == 0.0
    s_low = np.bincount(groups, weights=low, minlength=ngroups)
    a_low = np.bincount(groups, weights=np.abs(low), minlength=ngroups)
    t, et = _two_sum(lo, s_low)
    res, last = _two_sum(hi, t)
    err = np.where(a_low == 0.0, 0.0, up(g * up(a_low * f)))
    err = np.where(et == 0.0, err, up(err + np.abs(et)))
    err = np.where(last == 0.0, err, up(err + np.abs(last)))
    if not np.all(ok):
        # overflow range or lost low-order bits: plain sum, classical bound
        absum = np.bincount(groups, weights=np.abs(terms), minlength=ngroups)
        plain = np.bincount(groups, weights=terms, minlength=ngroups)
        perr = up(g * up(absum * f))
        res = np.where(ok, res, plain)
        err = np.where(ok, err, perr)
    return res, err


# -- vectorized directed rounding --------------------------------------------

def add_up(a, b):
    """fl(a + b) rounded toward +inf (exact directed rounding)."""
    s, e = _two_sum(a, b)
    return np.where(e > 0.0, up(s), s)


def add_down(a, b):
    s, e = _two_sum(a, b)
    return np.where(e < 0.0, down(s), s)


def _untrusted(p, a, b):
    a = np.abs(a)
    b = np.abs(b)
    return ((np.abs(p) < _UNDERFLOW_RISK) & (a != 0.0) & (b != 0.0)) | (a > 2.0 ** 995) | (b > 2.0 ** 995)


def mul_up(a, b):
    """a * b rounded toward +inf; unconditional bump where the EFT is unsafe."""
    p, e = _two_prod(a, b)
    return np.where((e > 0.0) | _untrusted(p, a, b), up(p), p)


def mul_down(a, b):
    p, e = _two_prod(a, b)
    return np.where((e < 0.0) | _untrusted(p, a, b), down(p), p)


def sum_nonneg_up(values, groups, ngroups):
    """Upper bound of per-group sums of nonnegative values (exact when possible)."""
    res, err = grouped_sum(values, groups, ngroups)
    return np.where(err == 0.0, res, up(res + err))
