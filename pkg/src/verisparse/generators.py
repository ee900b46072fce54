"""Random test matrices with controlled spectra."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .sparse import SparseMatrix


def _givens_layer(n: int, rng: np.random.Generator, reach: int) -> sp.csr_matrix:
    """Product of disjoint plane rotations on pairs (i, i + s), 1 <= s <= reach."""
    free = np.ones(n, dtype=bool)
    rows, cols, vals = [], [], []
    for i in rng.permutation(n):
        if not free[i]:
            continue
        cand = [j for j in range(max(0, i - reach), min(n, i + reach + 1)) if j != i and free[j]]
        if not cand:
            continue
        j = cand[rng.integers(len(cand))]
        free[i] = free[j] = False
        t = rng.uniform(0.0, 2.0 * np.pi)
        c, s = np.cos(t), np.sin(t)
        rows += [i, i, j, j]
        cols += [i, j, i, j]
        vals += [c, -s, s, c]
    idle = np.flatnonzero(free)
    rows += idle.tolist()
    cols += idle.tolist()
    vals += [1.0] * idle.size
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def sparse_orthogonal(n: int, rng: np.random.Generator, layers: int = 2, reach: int = 3) -> sp.csr_matrix:
    q = sp.identity(n, format="csr")
    for _ in range(layers):
        q = _givens_layer(n, rng, reach) @ q
    return sp.csr_matrix(q)


def singular_values(n: int, cond: float, rng: np.random.Generator, mode: str = "geometric") -> np.ndarray:
    """Singular values in [1/cond, 1], extremes included."""
    if cond < 1.0:
        raise ValueError("cond must be >= 1")
    if n == 1:
        return np.ones(1)
    if mode == "geometric":
        s = np.exp(-np.sort(rng.uniform(0.0, np.log(cond), n)))
    elif mode == "cluster":
        s = np.ones(n)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    s[0] = 1.0
    s[-1] = 1.0 / cond
    return s


def constructed_spectrum(n: int, cond: float, rng: np.random.Generator, layers: int = 2,
                         reach: int = 3, mode: str = "geometric"):
    """Sparse A = P U diag(s) V^T Q with prescribed singular values.

    U and V are products of banded plane rotations; P and Q are random
    permutations so the band is hidden. Returns (A, s) with s descending.
    The singular values of the stored binary64 matrix differ from s by
    about u * ||A||, so the oracle for tiny sigma_min should be recomputed
    from the stored matrix.
    """
    s = singular_values(n, cond, rng, mode)
    u = sparse_orthogonal(n, rng, layers, reach)
    v = sparse_orthogonal(n, rng, layers, reach)
    a = u @ sp.diags(s) @ v.T
    a = sp.csr_matrix(a)[rng.permutation(n)][:, rng.permutation(n)]
    return SparseMatrix.from_scipy(a), s


def random_sparse(n: int, density: float, rng: np.random.Generator, diag_shift: float = 0.0) -> SparseMatrix:
    """Gaussian entries on a random pattern (with a full diagonal when
    ``diag_shift`` is nonzero)."""
    m = sp.random(n, n, density=density, random_state=rng, data_rvs=rng.standard_normal, format="csc")
    if diag_shift:
        m = m + diag_shift * sp.identity(n)
    return SparseMatrix.from_scipy(m)


def integer_system(n: int, rng: np.random.Generator, density: float = 0.2, bound: int = 9):
    """Integer matrix with a dominant-ish diagonal and an integer right-hand side.

    The matrix is nonsingular with overwhelming probability; callers that need
    certainty should check the rational determinant.
    """
    mask = rng.random((n, n)) < density
    a = np.where(mask, rng.integers(-bound, bound + 1, (n, n)), 0).astype(np.float64)
    a[np.arange(n), np.arange(n)] = rng.integers(1, bound + 1, n) * rng.choice([-1, 1], n)
    b = rng.integers(-bound, bound + 1, n).astype(np.float64)
    return SparseMatrix.from_dense(a), b
