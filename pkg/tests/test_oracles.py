"""The frozen reference values are recomputed here from exact arithmetic."""

import math
from fractions import Fraction

import numpy as np

from oracles import (POW2, SQRT2_DOWN, SQRT2_UP, TWO_PROD_SQUARE, TWO_SUM_1E16, frac_solve,
                     int_solve)


def test_sqrt2_neighbours():
    up = Fraction(SQRT2_UP)
    assert up * up >= 2
    below = Fraction(math.nextafter(SQRT2_UP, 0.0))
    assert below * below < 2
    assert Fraction(SQRT2_DOWN) ** 2 <= 2 < Fraction(math.nextafter(SQRT2_DOWN, 3.0)) ** 2


def test_two_prod_square_exact():
    x = Fraction(1) + Fraction(1, 2 ** 27)
    v, e = TWO_PROD_SQUARE
    assert Fraction(v) + Fraction(e) == x * x
    assert v == float(x * x)


def test_two_sum_large_exact():
    v, e = TWO_SUM_1E16
    assert Fraction(v) + Fraction(e) == Fraction(10 ** 16 + 1)
    assert v == 1e16 + 1


def test_pow2_table_by_geometric_midpoint():
    for s, p in POW2.items():
        z = Fraction(p)
        # |log2 s - log2 p| <= 1/2  <=>  p^2/2 <= s^2 <= 2 p^2
        assert z * z / 2 <= Fraction(s) ** 2 <= 2 * z * z


def test_exact_solvers_agree(rng):
    for _ in range(10):
        n = int(rng.integers(1, 9))
        a = rng.integers(-5, 6, (n, n)).astype(float) + 7 * np.eye(n)
        b = rng.integers(-5, 6, n).astype(float)
        x = int_solve(a, b)
        assert x == frac_solve(a, b)
        for i in range(n):
            assert sum(Fraction(int(a[i, j])) * x[j] for j in range(n)) == int(b[i])


def test_exact_solvers_singular():
    a = np.array([[1.0, 2.0], [2.0, 4.0]])
    assert int_solve(a, np.ones(2)) is None
    assert frac_solve(a, np.ones(2)) is None
