from fractions import Fraction

import numpy as np
import pytest

from oracles import frac_solve, int_solve, sigma_min
from verisparse.baselines import (InverseNormBound, componentwise_inverse_bound, inv_norm_lu,
                                  inv_norm_lu_modified, residual_enclosure, sigmin_normal_eq, verify_spd)
from verisparse.generators import constructed_spectrum, integer_system
from verisparse.sparse import IntervalSparseMatrix, SparseMatrix


def point(m):
    return IntervalSparseMatrix.from_point(SparseMatrix.from_dense(np.asarray(m, dtype=float)))


def interval(lo, hi):
    lo = SparseMatrix.from_dense(np.asarray(lo, dtype=float))
    return IntervalSparseMatrix.from_bounds(lo, np.asarray(hi, dtype=float).T[np.asarray(lo.to_dense()).T != 0])


def test_verify_spd_examples():
    assert verify_spd(point(np.eye(3)))
    assert verify_spd(point([[2.0, 1.0], [1.0, 2.0]]))
    assert not verify_spd(point([[1.0, 2.0], [2.0, 1.0]]))
    assert not verify_spd(point([[1.0, 1.0], [1.0, 1.0]]))  # singular
    assert not verify_spd(point(np.diag([1.0, -1e-300])))
    assert not verify_spd(point(np.ones((2, 3))))


def test_verify_spd_interval_members():
    # [1 +- 0.5] on the diagonal stays definite; [0, 2] does not
    assert verify_spd(interval(np.diag([0.5, 0.5]), np.diag([1.5, 1.5])))
    assert verify_spd(interval([[0.5, -0.25], [-0.25, 0.5]], [[1.5, 0.25], [0.25, 1.5]]))
    s = SparseMatrix.identity(2)
    assert not verify_spd(IntervalSparseMatrix(2, 2, s.col_ptr, s.row_idx, np.array([-1.0, 1.0]),
                                               np.array([2.0, 2.0])))


def test_normal_eq_examples():
    assert sigmin_normal_eq(SparseMatrix.identity(4)) == 0.0
    assert sigmin_normal_eq(SparseMatrix.identity(4), alpha=0.25) == 0.5
    assert sigmin_normal_eq(SparseMatrix.identity(4), alpha=1.5) is None
    assert sigmin_normal_eq(SparseMatrix.from_dense([[1.0, 1.0], [1.0, 1.0]])) is None
    with pytest.raises(ValueError):
        sigmin_normal_eq(SparseMatrix.identity(2), alpha=-1.0)


def test_normal_eq_conditioning(rng):
    a, _ = constructed_spectrum(50, 1e4, rng)
    assert sigmin_normal_eq(a) == 0.0
    a, _ = constructed_spectrum(50, 1e10, rng)
    # A^T A has condition 1e20: positive definiteness cannot be certified
    assert sigmin_normal_eq(a) is None


def test_normal_eq_sound(rng):
    for _ in range(10):
        a, _ = constructed_spectrum(30, 1e3, rng)
        s = sigma_min(a.to_dense())
        for frac in (0.5, 0.99, 1.01, 2.0):
            got = sigmin_normal_eq(a, alpha=(frac * s) ** 2)
            if got is not None:
                assert got <= s


@pytest.mark.parametrize("fn", [inv_norm_lu, inv_norm_lu_modified])
def test_lu_examples(fn):
    # exact up to the rounding allowance of the interval products
    r = fn(SparseMatrix.identity(5))
    assert 1.0 <= r.bound <= 1.0 + 1e-13 and 0.0 <= r.contraction <= 1e-13
    r = fn(SparseMatrix.from_dense(np.diag([2.0, 4.0])))
    assert 0.5 <= r.bound <= 0.5 * (1 + 1e-12)
    assert fn(SparseMatrix.identity(3), p=1).bound <= 1.0 + 1e-13
    assert fn(SparseMatrix.from_dense([[1.0, 1.0], [1.0, 1.0]])) is None
    with pytest.raises(ValueError):
        InverseNormBound(np.inf, 1.0, 1.0, "lu")


def test_lu_bounds_sound(rng):
    looser = 0
    trials = 30
    for _ in range(trials):
        n = int(rng.integers(5, 60))
        a, _ = constructed_spectrum(n, 10 ** rng.uniform(0, 8), rng)
        true = np.linalg.norm(np.linalg.inv(a.to_dense()), np.inf)
        plain = inv_norm_lu(a)
        mod = inv_norm_lu_modified(a)
        assert plain is not None and mod is not None
        for r in (plain, mod):
            assert r.bound >= true * (1 - 1e-12)
        assert inv_norm_lu(a, p=1).bound >= np.linalg.norm(np.linalg.inv(a.to_dense()), 1) * (1 - 1e-12)
        looser += mod.bound >= plain.bound
    # splitting the triple product can only lose sharpness, up to rounding
    assert looser >= 0.9 * trials


def test_lu_norm_argument():
    with pytest.raises(ValueError):
        inv_norm_lu(SparseMatrix.identity(2), p=2)


def test_residual_enclosure_exact(rng):
    a, b = integer_system(12, rng)
    x = np.linalg.solve(a.to_dense(), b)
    mid, rad = residual_enclosure(a, b, x)
    A = a.to_dense()
    for i in range(12):
        exact = Fraction(b[i]) - sum(Fraction(A[i, j]) * Fraction(x[j]) for j in range(12))
        assert abs(exact - Fraction(mid[i])) <= Fraction(rad[i])


def test_componentwise_identity():
    # zero up to the underflow allowance carried by every interval product
    cb = componentwise_inverse_bound(SparseMatrix.identity(3), v=np.ones(3))
    assert np.all((cb.d_inv >= 1.0) & (cb.d_inv <= 1.0 + 1e-14))
    assert np.all((cb.u <= 1.0) & (cb.u >= 1.0 - 1e-14))
    assert np.all(cb.w <= 1e-300)
    inv = cb.inverse_bound()
    assert np.all(inv >= np.eye(3)) and np.all(inv - np.eye(3) <= 1e-14)
    assert np.all(cb.error_bound(SparseMatrix.identity(3), np.ones(3), np.ones(3)) <= 1e-300)


def test_componentwise_contains_exact(rng):
    n = 50
    a = rng.integers(-3, 4, (n, n)).astype(float)
    a[np.arange(n), np.arange(n)] = np.abs(a).sum(axis=1) + 1  # strictly dominant
    b = rng.integers(-5, 6, n).astype(float)
    A = SparseMatrix.from_dense(a)
    cb = componentwise_inverse_bound(A)
    assert cb is not None
    x = np.linalg.solve(a, b)
    err = cb.error_bound(A, b, x)
    exact = int_solve(a.astype(np.int64), b.astype(np.int64))
    for xi, ei, ti in zip(x, err, exact):
        assert abs(ti - Fraction(xi)) <= Fraction(ei)
    inv = cb.inverse_bound()
    exact_inv = np.abs(np.linalg.inv(a))
    assert np.all(inv >= exact_inv * (1 - 1e-12))


def test_componentwise_small_rational(rng):
    for _ in range(5):
        n = 6
        a = rng.standard_normal((n, n)) + 3 * np.eye(n)
        b = rng.standard_normal(n)
        A = SparseMatrix.from_dense(a)
        cb = componentwise_inverse_bound(A)
        if cb is None:
            continue
        x = np.linalg.solve(a, b)
        exact = frac_solve(a, b)
        err = cb.error_bound(A, b, x)
        for xi, ei, ti in zip(x, err, exact):
            assert abs(ti - Fraction(xi)) <= Fraction(ei)


def test_componentwise_rejects_bad_v():
    assert componentwise_inverse_bound(SparseMatrix.identity(2), v=np.array([1.0, -1.0])) is None
    assert componentwise_inverse_bound(SparseMatrix.from_dense([[1.0, 1.0], [1.0, 1.0]])) is None
