"""Symmetric indefinite LDL^T with 1x1/2x2 pivots (Bunch-Kaufman).

The factorization runs right-looking on dense storage of the pre-ordered
matrix, but every update touches only the structurally nonzero rows of the
pivot column, so the work follows the sparsity of the factor. Its accuracy
carries no guarantee; rigour comes from the residual bound downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from .ordering import fill_reducing_order
from .sparse import SparseMatrix

BK_ALPHA = (1.0 + math.sqrt(17.0)) / 8.0


class LdltBreakdown(ArithmeticError):
    """No acceptable pivot: the remaining column is exactly zero."""


class SingularBlockError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class BlockDiag:
    """Block diagonal D given by its diagonal, its first subdiagonal and the
    block sizes (sub[k] is nonzero only inside a 2x2 block starting at k)."""

    diag: np.ndarray
    sub: np.ndarray
    sizes: np.ndarray

    def __post_init__(self):
        if int(np.sum(self.sizes)) != self.diag.size or self.sub.size != max(self.diag.size - 1, 0):
            raise ValueError("blocks do not tile the dimension")
        if np.any((self.sizes != 1) & (self.sizes != 2)):
            raise ValueError("block sizes must be 1 or 2")

    @property
    def n(self) -> int:
        return int(self.diag.size)

    @classmethod
    def from_blocks(cls, blocks) -> "BlockDiag":
        diag, sub, sizes = [], [], []
        for blk in blocks:
            if np.ndim(blk) == 0 or len(blk) == 1:
                d = float(blk if np.ndim(blk) == 0 else blk[0])
                if diag:
                    sub.append(0.0)
                diag.append(d)
                sizes.append(1)
            else:
                a, b, c = map(float, blk)
                if diag:
                    sub.append(0.0)
                diag.extend((a, c))
                sub.append(b)
                sizes.append(2)
        return cls(np.array(diag), np.array(sub), np.array(sizes, dtype=np.int64))

    def blocks(self) -> Iterator[tuple]:
        k = 0
        for s in self.sizes:
            if s == 1:
                yield (k, (float(self.diag[k]),))
            else:
                yield (k, (float(self.diag[k]), float(self.sub[k]), float(self.diag[k + 1])))
            k += int(s)

    def to_sparse(self) -> sp.csc_matrix:
        n = self.n
        off = sp.diags(self.sub, -1, shape=(n, n)) if n > 1 else sp.csc_matrix((n, n))
        return sp.csc_matrix(sp.diags(self.diag) + off + off.T)

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()


@dataclass(frozen=True)
class LdltFactors:
    """P S P^T ~= L D L^T with S[perm][:, perm] = P S P^T."""

    perm: np.ndarray
    L: SparseMatrix
    D: BlockDiag

    @property
    def n(self) -> int:
        return int(self.perm.size)


def _is_symmetric(s: SparseMatrix) -> bool:
    return s == s.transpose()


def ldlt(s: SparseMatrix, order=None, pivoting: bool = True) -> LdltFactors:
    """Factor the symmetric matrix ``s``.

    ``order`` is the fill-reducing symmetric permutation applied first
    (minimum degree when omitted); Bunch-Kaufman interchanges are layered on
    top of it. With ``pivoting=False`` every pivot is the 1x1 diagonal entry.
    """
    if s.nrows != s.ncols:
        raise ValueError("ldlt requires a square matrix")
    if not _is_symmetric(s):
        raise ValueError("ldlt requires a bit-symmetric matrix")
    n = s.nrows
    if order is None:
        order = fill_reducing_order(s)
    perm = np.asarray(order, dtype=np.int64).copy()
    if sorted(perm.tolist()) != list(range(n)):
        raise ValueError("order is not a permutation")
    a = s.to_scipy()[perm][:, perm].toarray()
    L = np.zeros((n, n))
    diag = np.zeros(n)
    sub = np.zeros(max(n - 1, 0))
    sizes = []

    def swap(i, j):
        if i == j:
            return
        a[[i, j], :] = a[[j, i], :]
        a[:, [i, j]] = a[:, [j, i]]
        L[[i, j], :] = L[[j, i], :]
        perm[[i, j]] = perm[[j, i]]

    k = 0
    while k < n:
        akk = a[k, k]
        col = a[k + 1:, k]
        step = 1
        if pivoting:
            absc = np.abs(col)
            colmax = float(absc.max()) if absc.size else 0.0
            if colmax == 0.0 and akk == 0.0:
                raise LdltBreakdown(f"zero column at step {k}")
            if abs(akk) < BK_ALPHA * colmax:
                r = k + 1 + int(np.argmax(absc))
                rowvec = np.abs(a[k:, r])
                rowvec[r - k] = 0.0
                rowmax = float(rowvec.max())
                if abs(akk) * rowmax >= BK_ALPHA * colmax * colmax:
                    pass
                elif abs(a[r, r]) >= BK_ALPHA * rowmax:
                    swap(k, r)
                else:
                    swap(k + 1, r)
                    step = 2
        elif akk == 0.0:
            raise LdltBreakdown(f"zero pivot at step {k} without pivoting")

        if step == 1:
            d = a[k, k]
            idx = k + 1 + np.flatnonzero(a[k + 1:, k])
            w = a[idx, k]
            L[k, k] = 1.0
            if idx.size:
                L[idx, k] = w / d
                a[np.ix_(idx, idx)] -= np.multiply.outer(w, w) / d
            diag[k] = d
            sizes.append(1)
        else:
            d11, d21, d22 = a[k, k], a[k + 1, k], a[k + 1, k + 1]
            rest = a[k + 2:, k:k + 2]
            idx = k + 2 + np.flatnonzero(np.any(rest != 0.0, axis=1))
            w1 = a[idx, k]
            w2 = a[idx, k + 1]
            x = d22 / d21
            y = d11 / d21
            t = 1.0 / (x * y - 1.0)
            tb = t / d21
            p, q, r_ = tb * x, -tb, tb * y  # inverse of [[d11, d21], [d21, d22]]
            L[k, k] = L[k + 1, k + 1] = 1.0
            if idx.size:
                L[idx, k] = p * w1 + q * w2
                L[idx, k + 1] = q * w1 + r_ * w2
                upd = (p * np.multiply.outer(w1, w1)
                       + q * (np.multiply.outer(w1, w2) + np.multiply.outer(w2, w1))
                       + r_ * np.multiply.outer(w2, w2))
                a[np.ix_(idx, idx)] -= upd
            diag[k], diag[k + 1] = d11, d22
            sub[k] = d21
            sizes.append(2)
        k += step
    D = BlockDiag(diag, sub, np.array(sizes, dtype=np.int64))
    return LdltFactors(perm, SparseMatrix.from_dense(L), D)


def det2_sign(a: float, b: float, c: float) -> int:
    """Exact sign of a*c - b*b."""
    d = Fraction(a) * Fraction(c) - Fraction(b) * Fraction(b)
    return (d > 0) - (d < 0)


def inertia(D: BlockDiag) -> tuple[int, int, int]:
    """(positive, negative, zero) eigenvalue counts of D, computed exactly."""
    npe = nne = nze = 0
    sizes = D.sizes
    one = np.flatnonzero(sizes == 1)
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    d1 = D.diag[starts[one]]
    npe += int(np.count_nonzero(d1 > 0))
    nne += int(np.count_nonzero(d1 < 0))
    nze += int(np.count_nonzero(d1 == 0))
    for k in starts[sizes == 2]:
        a, b, c = float(D.diag[k]), float(D.sub[k]), float(D.diag[k + 1])
        sd = det2_sign(a, b, c)
        if sd < 0:
            npe += 1
            nne += 1
            continue
        tr = a + c  # sign of a rounded sum is exact
        if sd > 0:
            if tr > 0:
                npe += 2
            else:
                nne += 2
        elif tr > 0:
            npe += 1
            nze += 1
        elif tr < 0:
            nne += 1
            nze += 1
        else:
            nze += 2
    return npe, nne, nze


def _block_solve(D: BlockDiag, y: np.ndarray) -> np.ndarray:
    out = np.empty_like(y)
    starts = np.concatenate(([0], np.cumsum(D.sizes)[:-1]))
    one = starts[D.sizes == 1]
    if np.any(D.diag[one] == 0.0):
        raise SingularBlockError("zero 1x1 block in D")
    out[one] = y[one] / D.diag[one, None] if y.ndim == 2 else y[one] / D.diag[one]
    for k in starts[D.sizes == 2]:
        a, b, c = float(D.diag[k]), float(D.sub[k]), float(D.diag[k + 1])
        if det2_sign(a, b, c) == 0:
            raise SingularBlockError(f"singular 2x2 block at {k}")
        if b != 0.0:
            x, z = c / b, a / b
            tb = (1.0 / (x * z - 1.0)) / b
            p, q, r = tb * x, -tb, tb * z
        else:
            p, q, r = 1.0 / a, 0.0, 1.0 / c
        y1, y2 = y[k], y[k + 1]
        out[k] = p * y1 + q * y2
        out[k + 1] = q * y1 + r * y2
    return out


def _csr_cache(F: LdltFactors):
    cache = F.__dict__.get("_csr")
    if cache is None:
        Lc = F.L.to_scipy().tocsr()
        cache = (Lc, sp.csr_matrix(Lc.T))
        object.__setattr__(F, "_csr", cache)
    return cache


def solve_ldlt(F: LdltFactors, rhs) -> np.ndarray:
    """Approximate solution of (P^T L D L^T P) x = rhs."""
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != F.n:
        raise ValueError("solve_ldlt: dimension mismatch")
    Lr, Ut = _csr_cache(F)
    y = rhs[F.perm]
    y = spsolve_triangular(Lr, y, lower=True, unit_diagonal=True)
    y = _block_solve(F.D, y)
    y = spsolve_triangular(Ut, y, lower=False, unit_diagonal=True)
    x = np.empty_like(y)
    x[F.perm] = y
    return x
