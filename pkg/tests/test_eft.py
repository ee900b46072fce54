import math
from fractions import Fraction

import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import TWO_PROD_SQUARE, TWO_SUM_1E16
from verisparse import eft

finite = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e300, max_value=1e300)
safe = st.floats(allow_nan=False, min_value=-2.0 ** 500, max_value=2.0 ** 500).filter(
    lambda v: v == 0.0 or abs(v) > 2.0 ** -480)


def test_two_sum_examples():
    assert eft.two_sum(1.0, 2.0) == (3.0, 0.0)
    assert eft.two_sum(1e16, 1.0) == TWO_SUM_1E16
    assert eft.two_sum(0.3, -0.3) == (0.0, 0.0)


def test_two_prod_examples():
    assert eft.two_prod(2.0, 3.0) == (6.0, 0.0)
    x = 1.0 + 2.0 ** -27
    assert eft.two_prod(x, x) == TWO_PROD_SQUARE
    assert eft.two_prod(0.0, 5.5) == (0.0, 0.0)


def test_dot_compensated_examples():
    assert eft.dot_compensated(np.zeros(4), np.zeros(4)) == (0.0, 0.0)
    v, e = eft.dot_compensated([1e16, 1.0], [1.0, 1.0])
    assert Fraction(v) + Fraction(e) == 10 ** 16 + 1
    eye = np.eye(3)
    for i in range(3):
        for j in range(3):
            assert eft.dot_compensated(eye[i], eye[j]) == (float(i == j), 0.0)


@given(finite, finite)
def test_two_sum_exact(a, b):
    s, e = eft.two_sum(a, b)
    assert s == a + b
    assert Fraction(s) + Fraction(e) == Fraction(a) + Fraction(b)


@given(safe, safe)
def test_two_prod_exact(a, b):
    p, e = eft.two_prod(a, b)
    assert p == a * b
    assert Fraction(p) + Fraction(e) == Fraction(a) * Fraction(b)


@given(hnp.arrays(np.float64, st.integers(1, 30), elements=st.floats(-1e6, 1e6)),
       st.randoms(use_true_random=False))
def test_dot_compensated_twice_precision(x, r):
    y = np.array([r.uniform(-1e6, 1e6) for _ in x])
    v, e = eft.dot_compensated(x, y)
    exact = sum(Fraction(a) * Fraction(b) for a, b in zip(x.tolist(), y.tolist()))
    absdot = sum(abs(Fraction(a) * Fraction(b)) for a, b in zip(x.tolist(), y.tolist()))
    # Dot2 error bound |res - exact| <= u|exact| + gamma_n^2 sum|x_i y_i|,
    # plus what products in the subnormal range can lose
    g = Fraction(eft.gamma(len(x)))
    tiny = len(x) * Fraction(2.0 ** -1070)
    assert abs(Fraction(v) - exact) <= Fraction(2.0 ** -53) * abs(exact) + g * g * absdot + tiny


@given(hnp.arrays(np.float64, st.integers(1, 300),
                  elements=st.floats(-1e200, 1e200, allow_nan=False)),
       st.integers(1, 6), st.integers(0, 2 ** 31))
def test_grouped_sum_encloses_exact(terms, ngroups, seed):
    groups = np.random.default_rng(seed).integers(0, ngroups, terms.size)
    res, err = eft.grouped_sum(terms, groups, ngroups)
    for g in range(ngroups):
        exact = sum((Fraction(t) for t in terms[groups == g].tolist()), Fraction(0))
        assert abs(Fraction(float(res[g])) - exact) <= Fraction(float(err[g]))
        if err[g] == 0.0:
            assert Fraction(float(res[g])) == exact


@given(hnp.arrays(np.float64, st.integers(1, 200), elements=st.floats(0.0, 1e300)),
       st.integers(1, 4), st.integers(0, 2 ** 31))
def test_sum_nonneg_up_bounds(values, ngroups, seed):
    groups = np.random.default_rng(seed).integers(0, ngroups, values.size)
    s = eft.sum_nonneg_up(values, groups, ngroups)
    for g in range(ngroups):
        exact = sum((Fraction(t) for t in values[groups == g].tolist()), Fraction(0))
        assert s[g] == math.inf or Fraction(float(s[g])) >= exact


def test_grouped_sum_cancellation_is_exact():
    t = np.array([1e100, 1.0, -1e100, 2.0 ** -60, 3.0])
    res, err = eft.grouped_sum(t, np.zeros(5, dtype=np.int64), 1)
    exact = Fraction(4) + Fraction(2.0 ** -60)
    assert abs(Fraction(float(res[0])) - exact) <= Fraction(float(err[0]))
    assert res[0] == 4.0


def test_grouped_sum_overflow_path():
    t = np.array([1.7e308, 1.7e308, -1.0])
    res, err = eft.grouped_sum(t, np.zeros(3, dtype=np.int64), 1)
    assert res[0] == math.inf or err[0] == math.inf or abs(Fraction(float(res[0])) - Fraction(3.4e308) + 1) <= Fraction(float(err[0]))


def test_gamma():
    assert eft.gamma(0) == 0.0
    g = Fraction(eft.gamma(10))
    u = Fraction(1, 2 ** 53)
    assert g >= 10 * u / (1 - 10 * u)
    assert Fraction(eft.inflate_sum_bound(10)) >= 1 / (1 - g)


@given(finite, finite)
def test_vector_directed_helpers(a, b):
    s = Fraction(a) + Fraction(b)
    up, dn = float(eft.add_up(a, b)), float(eft.add_down(a, b))
    assert (up == math.inf or Fraction(up) >= s) and (dn == -math.inf or Fraction(dn) <= s)
