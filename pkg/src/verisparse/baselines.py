"""Comparison methods: positive definiteness of the normal equations and
inverse-norm bounds from approximate LU inverses.

These work on dense intermediates and are meant for moderate sizes; their
memory growth with fill-in is exactly what the augmented-matrix method avoids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import eft
from .interval import div_up, sqrt_down, sub_down
from .sparse import IntervalSparseMatrix, SparseMatrix, nonneg_product_upper, spgemm_interval


@dataclass(frozen=True)
class InverseNormBound:
    p: float
    bound: float
    contraction: float
    method: str

    def __post_init__(self):
        if not self.contraction < 1.0:
            raise ValueError("a bound needs contraction < 1")


# -- dense rigorous helpers --------------------------------------------------------

def _sum_up(x: np.ndarray, axis: int) -> np.ndarray:
    """Upper bound on exact sums of nonnegative entries along ``axis``."""
    k = x.shape[axis]
    return eft.up(np.sum(x, axis=axis) * eft.inflate_sum_bound(max(k, 1)))


def _norm_up(absm: np.ndarray, p) -> float:
    """Upper bound on the 1- or inf-norm of a matrix given by entrywise magnitudes."""
    if absm.size == 0:
        return 0.0
    if p == 1:
        return float(np.max(_sum_up(absm, 0)))
    if p in (np.inf, "inf"):
        return float(np.max(_sum_up(absm, 1)))
    raise ValueError("p must be 1 or inf")


def _spectral_up(absm: np.ndarray) -> float:
    return float(eft.up(np.sqrt(eft.mul_up(_norm_up(absm, 1), _norm_up(absm, np.inf)))))


def _matmul_midrad(am: np.ndarray, ar, bm: np.ndarray, br):
    """Enclosure (mid, rad) of the product of (am +- ar) and (bm +- br).

    Either radius may be None for a point matrix.
    """
    k = am.shape[1]
    mid = am @ bm
    rad = eft.up(eft.gamma(k) * nonneg_product_upper(np.abs(am), np.abs(bm), k))
    if br is not None:
        rad = eft.up(rad + nonneg_product_upper(np.abs(am), br, k))
    if ar is not None:
        t = np.abs(bm) if br is None else eft.add_up(np.abs(bm), br)
        rad = eft.up(rad + nonneg_product_upper(ar, t, k))
    return mid, eft.up(eft.up(rad))


def _mag_diff_identity(mid: np.ndarray, rad: np.ndarray) -> np.ndarray:
    """Entrywise upper bound on |X - I| for X in mid +- rad."""
    d = mid.copy()
    n = min(d.shape)
    i = np.arange(n)
    dev = np.abs(d)
    dev[i, i] = np.maximum(np.abs(eft.add_up(d[i, i], -1.0)), np.abs(eft.add_down(d[i, i], -1.0)))
    return eft.up(dev + rad)


# -- normal equations ----------------------------------------------------------

def _symmetric_part(s: IntervalSparseMatrix):
    lo, hi = s.to_dense_bounds()
    lo = np.maximum(lo, lo.T)
    hi = np.minimum(hi, hi.T)
    return lo, hi


def verify_spd(s: IntervalSparseMatrix) -> bool:
    """True only if every symmetric member of ``s`` is positive definite.

    Floating Cholesky of mid(s) - c I followed by a rigorous bound on its
    residual; every member X satisfies
    lambda_min(X) >= c - ||rad||_2 - ||mid - c I - G G^T||_2.
    """
    if s.nrows != s.ncols:
        return False
    n = s.nrows
    if n == 0:
        return False
    lo, hi = _symmetric_part(s)
    if np.any(lo > hi) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        return False
    mid = np.where(lo == hi, lo, 0.5 * lo + 0.5 * hi)
    rad = np.maximum(eft.add_up(hi, -mid), eft.add_up(mid, -lo))
    rho_rad = _spectral_up(rad)
    dmax = float(np.max(np.abs(np.diag(mid))))
    # shift past the radius plus a Cholesky roundoff allowance; retry once with
    # twice the residual actually observed
    c = eft.up(rho_rad + 2.0 * (n + 1) * n * eft.UNIT_ROUNDOFF * dmax) + eft.REALMIN
    for _ in range(2):
        ok, rho_res = _cholesky_residual(mid, c)
        if not ok:
            return False
        need = eft.add_up(rho_res, rho_rad)
        if c > need:
            return True
        c = eft.up(need + rho_res)
    return False


def _cholesky_residual(mid: np.ndarray, c: float):
    n = mid.shape[0]
    a = mid.copy()
    i = np.arange(n)
    # round the shifted diagonal down: mid - c I - a is then PSD
    a[i, i] = eft.add_down(mid[i, i], -c)
    try:
        g = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False, math.inf
    if not np.all(np.isfinite(g)):
        return False, math.inf
    pm, pr = _matmul_midrad(g, None, g.T, None)
    dev = np.maximum(np.abs(eft.add_up(a, -pm)), np.abs(eft.add_down(a, -pm)))
    return True, _spectral_up(eft.up(dev + pr))


def sigmin_normal_eq(a: SparseMatrix, alpha: float = 0.0) -> Optional[float]:
    """sqrt(alpha) as a lower bound on sigma_min(a) if A^T A - alpha I is
    verified positive definite, else None."""
    if a.nrows != a.ncols or alpha < 0:
        raise ValueError("sigmin_normal_eq needs a square matrix and alpha >= 0")
    at = IntervalSparseMatrix.from_point(a.transpose())
    ai = IntervalSparseMatrix.from_point(a)
    g = spgemm_interval(at, ai, sharp=False)
    n = a.nrows
    lo = g._csc(g.lo).tolil()
    hi = g._csc(g.hi).tolil()
    for k in range(n):
        lo[k, k] = eft.add_down(lo[k, k], -alpha)
        hi[k, k] = eft.add_up(hi[k, k], -alpha)
    lo, hi = sp.csc_matrix(lo), sp.csc_matrix(hi)
    pat = sp.csc_matrix(abs(lo) + abs(hi) + sp.identity(n))
    pat.sort_indices()
    rows = pat.indices.astype(np.int64)
    cols = np.repeat(np.arange(n), np.diff(pat.indptr))
    lv = np.asarray(lo[rows, cols]).ravel()
    hv = np.asarray(hi[rows, cols]).ravel()
    s = IntervalSparseMatrix(n, n, pat.indptr.astype(np.int64), rows, lv, hv)
    if not verify_spd(s):
        return None
    return sqrt_down(float(alpha))


# -- LU based bounds -------------------------------------------------------------

@dataclass(frozen=True)
class _LuInverses:
    ap: np.ndarray      # Pr A Pc, dense
    u: np.ndarray
    xl: np.ndarray
    xu: np.ndarray
    perm_r: np.ndarray  # ap = a[perm_r][:, perm_c]
    perm_c: np.ndarray


def _lu_inverses(a: SparseMatrix) -> Optional[_LuInverses]:
    if a.nrows != a.ncols:
        raise ValueError("square matrix required")
    n = a.nrows
    try:
        lu = spla.splu(a.to_scipy().tocsc())
    except RuntimeError:
        return None
    perm_r = np.empty(n, dtype=np.int64)
    perm_r[lu.perm_r] = np.arange(n)
    perm_c = np.empty(n, dtype=np.int64)
    perm_c[lu.perm_c] = np.arange(n)
    ap = a.to_dense()[perm_r][:, perm_c]
    l = lu.L.toarray()
    u = lu.U.toarray()
    eye = np.eye(n)
    with np.errstate(all="ignore"):
        xl = sla.solve_triangular(l, eye, lower=True, unit_diagonal=True)
        xu = sla.solve_triangular(u, eye, lower=False)
    if not (np.all(np.isfinite(xl)) and np.all(np.isfinite(xu))):
        return None
    return _LuInverses(ap, u, xl, xu, perm_r, perm_c)


def _bound_from(xl, xu, contraction: float, p) -> float:
    num = eft.mul_up(_norm_up(np.abs(xu), p), _norm_up(np.abs(xl), p))
    return div_up(float(num), sub_down(1.0, contraction))


def inv_norm_lu(a: SparseMatrix, p=np.inf) -> Optional[InverseNormBound]:
    """||A^-1||_p <= ||X_U|| ||X_L|| / (1 - ||X_L A X_U - I||) with X_L, X_U
    approximate inverses of the LU factors."""
    f = _lu_inverses(a)
    if f is None:
        return None
    bm, br = _matmul_midrad(f.xl, None, f.ap, None)
    cm, cr = _matmul_midrad(bm, br, f.xu, None)
    rho = _norm_up(_mag_diff_identity(cm, cr), p)
    if not rho < 1.0:
        return None
    return InverseNormBound(p, _bound_from(f.xl, f.xu, rho, p), float(rho), "lu")


def inv_norm_lu_modified(a: SparseMatrix, p=np.inf) -> Optional[InverseNormBound]:
    """Same bound through X_L A X_U = I + (X_L A - U) X_U + (U X_U - I), which
    never stores the triple product. Falls back to :func:`inv_norm_lu` when
    the first factor alone is not contracting."""
    f = _lu_inverses(a)
    if f is None:
        return None
    bm, br = _matmul_midrad(f.xl, None, f.ap, None)
    dev = eft.up(np.maximum(np.abs(eft.add_up(bm, -f.u)), np.abs(eft.add_down(bm, -f.u))) + br)
    del bm, br
    alpha = float(eft.mul_up(_norm_up(dev, p), _norm_up(np.abs(f.xu), p)))
    if not alpha < 1.0:
        return inv_norm_lu(a, p)
    um, ur = _matmul_midrad(f.u, None, f.xu, None)
    beta = _norm_up(_mag_diff_identity(um, ur), p)
    total = float(eft.add_up(alpha, beta))
    if not total < 1.0:
        return None
    return InverseNormBound(p, _bound_from(f.xl, f.xu, total, p), total, "lu_modified")


# -- componentwise bound -----------------------------------------------------------

@dataclass(frozen=True)
class ComponentwiseBound:
    """|A^-1 b - x| <= Pc |X_U| (D^-1 + v w^T) |X_L Pr (b - A x)|.

    ``d_inv``, ``v``, ``w`` describe the M-matrix bound on the inverse of the
    preconditioned matrix; ``abs_xu`` is |X_U|.
    """

    perm_r: np.ndarray
    perm_c: np.ndarray
    xl: np.ndarray
    abs_xu: np.ndarray
    d_inv: np.ndarray
    v: np.ndarray
    w: np.ndarray
    u: np.ndarray

    def inverse_bound(self) -> np.ndarray:
        """Entrywise upper bound on |A^-1|."""
        n = self.v.size
        core = eft.up(np.diag(self.d_inv) + eft.mul_up(self.v[:, None], self.w[None, :]))
        t = nonneg_product_upper(self.abs_xu, core, n)
        t = nonneg_product_upper(t, np.abs(self.xl), n)
        out = np.empty_like(t)
        out[np.ix_(self.perm_c, self.perm_r)] = t
        return out

    def error_bound(self, a: SparseMatrix, b, x) -> np.ndarray:
        """Componentwise upper bound on |A^-1 b - x|."""
        b = np.asarray(b, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        rmid, rrad = residual_enclosure(a, b, x)
        rmid, rrad = rmid[self.perm_r], rrad[self.perm_r]
        n = self.v.size
        sm, sr = _matmul_midrad(self.xl, None, rmid[:, None], rrad[:, None])
        s = eft.up(np.abs(sm[:, 0]) + sr[:, 0])
        ws = float(np.max(_sum_up(eft.mul_up(self.w, s)[None, :], 1)))
        t = eft.up(eft.mul_up(self.d_inv, s) + eft.mul_up(self.v, ws))
        e = nonneg_product_upper(self.abs_xu, t[:, None], n)[:, 0]
        out = np.empty_like(e)
        out[self.perm_c] = e
        return out


def residual_enclosure(a: SparseMatrix, b: np.ndarray, x: np.ndarray):
    """(mid, rad) with |b - A x - mid| <= rad, from error-free products."""
    n = a.nrows
    rows = a.row_idx
    cols = a.col_indices()
    p, e = eft._two_prod(-a.values, x[cols])
    unsafe = eft._untrusted(p, a.values, x[cols])
    terms = np.concatenate((b, p, np.where(unsafe, 0.0, e)))
    groups = np.concatenate((np.arange(n), rows, rows))
    res, err = eft.grouped_sum(terms, groups, n)
    slack = np.bincount(rows, weights=unsafe * eft.UNDERFLOW_ALLOWANCE, minlength=n)
    err = np.where(slack > 0, eft.up(err + eft.up(2.0 * slack)), err)
    return res, err


def componentwise_inverse_bound(a: SparseMatrix, v=None) -> Optional[ComponentwiseBound]:
    """M-matrix bound for the inverse of C = X_L A X_U.

    With H = D - E the comparison matrix of C (lower bound over the
    enclosure), any v > 0 with u = H v > 0 gives |C^-1| <= D^-1 + v w^T,
    w_k = max_i G_ik / u_i and G = E D^-1.
    """
    f = _lu_inverses(a)
    if f is None:
        return None
    n = a.nrows
    bm, br = _matmul_midrad(f.xl, None, f.ap, None)
    cm, cr = _matmul_midrad(bm, br, f.xu, None)
    clo = eft.down(cm - cr)
    chi = eft.up(cm + cr)
    i = np.arange(n)
    dlo = np.where((clo[i, i] <= 0.0) & (chi[i, i] >= 0.0), 0.0,
                   np.minimum(np.abs(clo[i, i]), np.abs(chi[i, i])))
    if np.any(dlo <= 0.0):
        return None
    emag = np.maximum(np.abs(clo), np.abs(chi))
    emag[i, i] = 0.0
    if v is None:
        h = -emag
        h[i, i] = dlo
        try:
            v = np.linalg.solve(h, np.ones(n))
        except np.linalg.LinAlgError:
            return None
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (n,) or not np.all(np.isfinite(v)) or np.any(v <= 0.0):
        return None
    ev = nonneg_product_upper(emag, v[:, None], n)[:, 0]
    u = eft.add_down(eft.mul_down(dlo, v), -ev)
    if np.any(u <= 0.0):
        return None
    d_inv = np.array([div_up(1.0, float(d)) for d in dlo])
    g = eft.mul_up(emag, d_inv[None, :])
    # w_k = max_i G_ik / u_i, rounded up: bump the round-to-nearest quotient twice
    w = np.max(eft.up(eft.up(g / u[:, None])), axis=0)
    return ComponentwiseBound(f.perm_r, f.perm_c, f.xl, np.abs(f.xu), d_inv, v, w, u)
