"""Compressed sparse column storage, Matrix Market I/O and rigorous kernels."""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from typing import IO, Union

import numpy as np
import scipy.sparse as sp

from . import eft
from .interval import sqrt_up, mul_up as _mul_up_scalar


class MatrixMarketError(ValueError):
    """Malformed Matrix Market content."""


class MatrixMarketHeaderError(MatrixMarketError):
    pass


class MatrixMarketBoundsError(MatrixMarketError):
    pass


class MatrixMarketPatternError(MatrixMarketError):
    """Pattern files carry no values and cannot define a real matrix."""


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    nrows: int
    ncols: int
    col_ptr: np.ndarray
    row_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        cp, ri = self.col_ptr, self.row_idx
        if cp.shape != (self.ncols + 1,) or cp[0] != 0 or cp[-1] != ri.size or ri.size != self.values.size:
            raise ValueError("inconsistent CSC arrays")
        if np.any(np.diff(cp) < 0):
            raise ValueError("col_ptr must be nondecreasing")
        if ri.size:
            if ri.min() < 0 or ri.max() >= self.nrows:
                raise ValueError("row index out of range")
            d = np.diff(ri)
            same_col = np.repeat(np.arange(self.ncols), np.diff(cp))
            if np.any((d <= 0) & (same_col[1:] == same_col[:-1])):
                raise ValueError("row indices must be strictly increasing within a column")
        for a in (cp, ri, self.values):
            a.setflags(write=False)

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        m = sp.csc_matrix(m, dtype=np.float64, copy=True)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr.astype(np.int64),
                   m.indices.astype(np.int64), m.data.astype(np.float64))

    @classmethod
    def from_dense(cls, a) -> "SparseMatrix":
        a = np.asarray(a, dtype=np.float64)
        return cls.from_scipy(sp.csc_matrix(a))

    @classmethod
    def from_coo(cls, nrows, ncols, rows, cols, vals) -> "SparseMatrix":
        m = sp.coo_matrix((np.asarray(vals, dtype=np.float64), (np.asarray(rows), np.asarray(cols))),
                          shape=(nrows, ncols))
        return cls.from_scipy(m.tocsc())

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls.from_scipy(sp.identity(n, format="csc"))

    # -- views --------------------------------------------------------------
    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def to_scipy(self) -> sp.csc_matrix:
        return sp.csc_matrix((self.values.copy(), self.row_idx.copy(), self.col_ptr.copy()), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.to_scipy().T)

    @property
    def T(self) -> "SparseMatrix":
        return self.transpose()

    def col_indices(self) -> np.ndarray:
        return np.repeat(np.arange(self.ncols), np.diff(self.col_ptr))

    def fingerprint(self) -> dict:
        h = hashlib.sha256()
        for a in (np.array(self.shape, dtype=np.int64), self.col_ptr.astype(np.int64),
                  self.row_idx.astype(np.int64), self.values.astype("<f8")):
            h.update(np.ascontiguousarray(a).tobytes())
        return {"nrows": self.nrows, "ncols": self.ncols, "nnz": self.nnz, "sha256": h.hexdigest()}

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (self.shape == other.shape and np.array_equal(self.col_ptr, other.col_ptr)
                and np.array_equal(self.row_idx, other.row_idx)
                and np.array_equal(self.values.view(np.int64), other.values.view(np.int64)))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class IntervalSparseMatrix:
    """Interval matrix on a shared CSC pattern; entries off the pattern are [0, 0]."""

    nrows: int
    ncols: int
    col_ptr: np.ndarray
    row_idx: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if np.any(np.isnan(self.lo)) or np.any(np.isnan(self.hi)) or np.any(self.lo > self.hi):
            raise ValueError("invalid interval entries (need lo <= hi, no NaN)")

    @classmethod
    def from_point(cls, a: SparseMatrix) -> "IntervalSparseMatrix":
        return cls(a.nrows, a.ncols, a.col_ptr, a.row_idx, a.values.copy(), a.values.copy())

    @classmethod
    def from_bounds(cls, lo: SparseMatrix, hi_values: np.ndarray) -> "IntervalSparseMatrix":
        return cls(lo.nrows, lo.ncols, lo.col_ptr, lo.row_idx, lo.values.copy(), np.asarray(hi_values, float))

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return int(self.lo.size)

    def _csc(self, data) -> sp.csc_matrix:
        return sp.csc_matrix((data, self.row_idx.copy(), self.col_ptr.copy()), shape=self.shape)

    def mid_rad(self):
        """Midpoint values and upward-rounded radii on the pattern."""
        mid = 0.5 * self.lo + 0.5 * self.hi
        mid = np.where(self.lo == self.hi, self.lo, mid)
        rad = np.maximum(eft.add_up(self.hi, -mid), eft.add_up(mid, -self.lo))
        return mid, rad

    def mag_values(self) -> np.ndarray:
        return np.maximum(np.abs(self.lo), np.abs(self.hi))

    def to_dense_bounds(self):
        return self._csc(self.lo.copy()).toarray(), self._csc(self.hi.copy()).toarray()

    def contains(self, a: np.ndarray) -> bool:
        lo, hi = self.to_dense_bounds()
        return bool(np.all(lo <= a) and np.all(a <= hi))


# -- Matrix Market ------------------------------------------------------------

_SYMMETRIES = ("general", "symmetric", "skew-symmetric")


def mm_read(source: Union[str, bytes, IO]) -> SparseMatrix:
    """Read a real Matrix Market file (coordinate or array format)."""
    if isinstance(source, (bytes, bytearray)):
        text = source.decode("ascii")
    elif isinstance(source, str):
        with open(source, "r", encoding="ascii") as fh:
            text = fh.read()
    else:
        raw = source.read()
        text = raw.decode("ascii") if isinstance(raw, (bytes, bytearray)) else raw
    lines = text.splitlines()
    if not lines:
        raise MatrixMarketHeaderError("empty input")
    head = lines[0].split()
    if len(head) != 5 or head[0].lower() != "%%matrixmarket" or head[1].lower() != "matrix":
        raise MatrixMarketHeaderError(f"bad banner: {lines[0]!r}")
    fmt, field, sym = (h.lower() for h in head[2:])
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketHeaderError(f"unsupported format {fmt!r}")
    if field == "pattern":
        raise MatrixMarketPatternError("pattern matrices have no values")
    if field not in ("real", "integer", "double"):
        raise MatrixMarketHeaderError(f"unsupported field {field!r}")
    if sym not in _SYMMETRIES:
        raise MatrixMarketHeaderError(f"unsupported symmetry {sym!r}")
    body = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise MatrixMarketHeaderError("missing size line")
    try:
        size = [int(t) for t in body[0].split()]
    except ValueError as exc:
        raise MatrixMarketHeaderError(f"bad size line {body[0]!r}") from exc
    data = body[1:]
    if fmt == "coordinate":
        if len(size) != 3:
            raise MatrixMarketHeaderError("coordinate size line needs 3 integers")
        m, n, nnz = size
        if len(data) != nnz:
            raise MatrixMarketHeaderError(f"expected {nnz} entries, found {len(data)}")
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for t, ln in enumerate(data):
            parts = ln.split()
            if len(parts) != 3:
                raise MatrixMarketHeaderError(f"bad entry line {ln!r}")
            rows[t], cols[t], vals[t] = int(parts[0]) - 1, int(parts[1]) - 1, float(parts[2])
        if nnz and (rows.min() < 0 or cols.min() < 0 or rows.max() >= m or cols.max() >= n):
            raise MatrixMarketBoundsError("entry index out of bounds")
    else:
        if len(size) != 2:
            raise MatrixMarketHeaderError("array size line needs 2 integers")
        m, n = size
        jj, ii = np.meshgrid(np.arange(n), np.arange(m))
        if sym == "general":
            rows, cols = ii.T.ravel(), jj.T.ravel()
        else:
            keep = (ii >= jj) if sym == "symmetric" else (ii > jj)
            rows, cols = ii.T[keep.T], jj.T[keep.T]
        if len(data) != rows.size:
            raise MatrixMarketHeaderError(f"expected {rows.size} values, found {len(data)}")
        vals = np.array([float(ln.split()[0]) for ln in data])
    if sym != "general":
        if m != n:
            raise MatrixMarketHeaderError("symmetric storage requires a square matrix")
        if sym == "symmetric" and np.any(rows < cols) or sym == "skew-symmetric" and np.any(rows <= cols):
            raise MatrixMarketBoundsError("symmetric storage must use the lower triangle")
        off = rows != cols
        sign = 1.0 if sym == "symmetric" else -1.0
        rows, cols, vals = (np.concatenate((rows, cols[off])), np.concatenate((cols, rows[off])),
                            np.concatenate((vals, sign * vals[off])))
    return SparseMatrix.from_coo(m, n, rows, cols, vals)


def mm_write(a: SparseMatrix, dest: Union[str, IO], symmetry: str = "general") -> None:
    """Write coordinate real format with 17 significant digits."""
    buf = io.StringIO()
    buf.write(f"%%MatrixMarket matrix coordinate real {symmetry}\n")
    rows = a.row_idx
    cols = a.col_indices()
    vals = a.values
    if symmetry == "symmetric":
        keep = rows >= cols
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    elif symmetry != "general":
        raise ValueError("mm_write supports general and symmetric output")
    buf.write(f"{a.nrows} {a.ncols} {rows.size}\n")
    for i, j, v in zip(rows, cols, vals):
        buf.write(f"{i + 1} {j + 1} {v:.17g}\n")
    if isinstance(dest, str):
        with open(dest, "w", encoding="ascii") as fh:
            fh.write(buf.getvalue())
    else:
        dest.write(buf.getvalue())


# -- structural operations ----------------------------------------------------

def augment(a: SparseMatrix) -> SparseMatrix:
    """The symmetric 2n x 2n matrix [[0, A^T], [A, 0]]."""
    if a.nrows != a.ncols:
        raise ValueError("augment requires a square matrix")
    n = a.nrows
    rows = a.row_idx
    cols = a.col_indices()
    r = np.concatenate((rows + n, cols))
    c = np.concatenate((cols, rows + n))
    v = np.concatenate((a.values, a.values))
    return SparseMatrix.from_coo(2 * n, 2 * n, r, c, v)


def spmv(a: SparseMatrix, x) -> np.ndarray:
    """y = A x in round-to-nearest, each y_i accumulated in column order."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (a.ncols,):
        raise ValueError("spmv: dimension mismatch")
    return a.to_scipy() @ x


# -- interval products ----------------------------------------------------------

def _contributions(a_ptr, a_idx, b_ptr, b_idx, b_cols):
    """Index arrays (pos_in_a, pos_in_b) of every structural product term."""
    l = b_idx
    counts = a_ptr[l + 1] - a_ptr[l]
    total = int(counts.sum())
    bpos = np.repeat(np.arange(l.size), counts)
    starts = np.cumsum(counts) - counts
    apos = a_ptr[l][bpos] + (np.arange(total) - starts[bpos])
    return apos, bpos


def _select_pair(p, e, pick_min: bool):
    """Lexicographic min/max over corner pairs: exact because fl is monotone."""
    idx = np.argmin(p, axis=0) if pick_min else np.argmax(p, axis=0)
    best_p = np.take_along_axis(p, idx[None], 0)[0]
    tie = p == best_p[None]
    e_masked = np.where(tie, e, np.inf if pick_min else -np.inf)
    best_e = e_masked.min(axis=0) if pick_min else e_masked.max(axis=0)
    return best_p, best_e


def spgemm_interval(a: IntervalSparseMatrix, b: IntervalSparseMatrix, sharp: bool = True) -> IntervalSparseMatrix:
    """Enclosure of {X Y : X in a, Y in b}.

    ``sharp=True`` takes the exact hull of the four corner products of every
    term and sums the endpoints with compensated summation; ``sharp=False``
    uses a midpoint-radius product with an a-priori error bound.
    """
    if a.ncols != b.nrows:
        raise ValueError("spgemm_interval: dimension mismatch")
    for v in (a.lo, a.hi, b.lo, b.hi):
        if not np.all(np.isfinite(v)):
            raise ValueError("spgemm_interval requires finite endpoints")
    if not sharp:
        return _spgemm_midrad(a, b)
    m, n = a.nrows, b.ncols
    b_cols = np.repeat(np.arange(b.ncols), np.diff(b.col_ptr))
    apos, bpos = _contributions(a.col_ptr, a.row_idx, b.col_ptr, b.row_idx, b_cols)
    if apos.size == 0:
        return IntervalSparseMatrix(m, n, np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64),
                                    np.zeros(0), np.zeros(0))
    i = a.row_idx[apos]
    j = b_cols[bpos]
    corners = [eft._two_prod(x[apos], y[bpos]) for x in (a.lo, a.hi) for y in (b.lo, b.hi)]
    p = np.stack([c[0] for c in corners])
    e = np.stack([c[1] for c in corners])
    unsafe = np.stack([eft._untrusted(c[0], x[apos], y[bpos])
                       for c, (x, y) in zip(corners, [(x, y) for x in (a.lo, a.hi) for y in (b.lo, b.hi)])])
    e = np.where(unsafe, 0.0, e)
    lo_p, lo_e = _select_pair(p, e, True)
    hi_p, hi_e = _select_pair(p, e, False)
    slack = np.where(unsafe.any(axis=0), eft.UNDERFLOW_ALLOWANCE, 0.0)

    key = j * m + i  # column-major ordering gives CSC order directly
    ukey, grp = np.unique(key, return_inverse=True)
    g = ukey.size
    grp2 = np.concatenate((grp, grp))
    lo_res, lo_err = eft.grouped_sum(np.concatenate((lo_p, lo_e)), grp2, g)
    hi_res, hi_err = eft.grouped_sum(np.concatenate((hi_p, hi_e)), grp2, g)
    s = np.bincount(grp, weights=slack, minlength=g)
    s = np.where(s > 0, eft.up(s * eft.inflate_sum_bound(max(int(np.bincount(grp).max()), 1))), 0.0)
    lo_err = np.where(s > 0, eft.up(lo_err + s), lo_err)
    hi_err = np.where(s > 0, eft.up(hi_err + s), hi_err)
    lo = np.where(lo_err == 0.0, lo_res, eft.down(lo_res - lo_err))
    hi = np.where(hi_err == 0.0, hi_res, eft.up(hi_res + hi_err))
    rows = ukey % m
    cols = ukey // m
    col_ptr = np.concatenate(([0], np.cumsum(np.bincount(cols, minlength=n)))).astype(np.int64)
    return IntervalSparseMatrix(m, n, col_ptr, rows.astype(np.int64), lo, hi)


def nonneg_product_upper(x, y, inner: int):
    """Entrywise upper bound on the exact product of nonnegative matrices.

    ``x`` and ``y`` may be scipy sparse or dense arrays; ``inner`` bounds the
    number of terms in any entry. The result has the structure of fl(x @ y).
    """
    z = x @ y
    f = eft.inflate_sum_bound(max(inner, 1))
    tiny = inner * eft.UNDERFLOW_ALLOWANCE
    if sp.issparse(z):
        # scipy drops entries that sum to zero, underflowed ones included, so
        # the bound lives on the structural product pattern
        sx, sy = sp.csc_matrix(x, copy=True), sp.csc_matrix(y, copy=True)
        sx.data = np.ones_like(sx.data)
        sy.data = np.ones_like(sy.data)
        s = sp.csc_matrix(sx @ sy)
        s.sort_indices()
        rows = s.indices.astype(np.int64)
        cols = np.repeat(np.arange(s.shape[1]), np.diff(s.indptr))
        v = _values_on(rows, cols, z)
        s.data = eft.up(eft.up(v * f) + tiny)
        return s
    return eft.up(eft.up(np.asarray(z) * f) + tiny)


def _max_row_nnz(m: sp.spmatrix) -> int:
    m = sp.csr_matrix(m)
    return int(np.diff(m.indptr).max()) if m.shape[0] else 0


def _values_on(rows, cols, mat) -> np.ndarray:
    """Entries of ``mat`` at (rows, cols), zero where not stored."""
    mat = sp.csc_matrix(mat)
    mat.sum_duplicates()
    nr = mat.shape[0]
    mkey = np.repeat(np.arange(mat.shape[1]), np.diff(mat.indptr)) * nr + mat.indices
    key = cols * nr + rows
    pos = np.searchsorted(mkey, key)
    pos = np.minimum(pos, max(mkey.size - 1, 0))
    hit = (mkey.size > 0) & (mkey[pos] == key) if mkey.size else np.zeros(key.size, bool)
    return np.where(hit, mat.data[pos] if mkey.size else 0.0, 0.0)


def _spgemm_midrad(a: IntervalSparseMatrix, b: IntervalSparseMatrix) -> IntervalSparseMatrix:
    am, ar = a.mid_rad()
    bm, br = b.mid_rad()
    Am, Ar = a._csc(am), a._csc(ar)
    Bm, Br = b._csc(bm), b._csc(br)
    k = max(_max_row_nnz(Am), 1)
    cm = sp.csc_matrix(Am @ Bm)
    absA, absB = abs(Am), abs(Bm)
    m1 = nonneg_product_upper(absA, absB, k)
    m2 = nonneg_product_upper(absA, Br, k)
    bsum = b._csc(eft.add_up(np.abs(bm), br))
    m3 = nonneg_product_upper(Ar, bsum, k)
    g = eft.gamma(k)
    rad = sp.csc_matrix(m1 * g + m2 + m3)  # pattern union
    # bump the combination: two additions and one scaling
    rad.data = eft.up(eft.up(eft.up(rad.data)))
    rad.sum_duplicates()
    rad.sort_indices()
    pattern = sp.csc_matrix(abs(cm) + rad)
    pattern.sum_duplicates()
    pattern.sort_indices()
    rows = pattern.indices.astype(np.int64)
    cols = np.repeat(np.arange(pattern.shape[1]), np.diff(pattern.indptr))
    mid = _values_on(rows, cols, cm)
    r = _values_on(rows, cols, rad)
    lo = eft.down(mid - r)
    hi = eft.up(mid + r)
    return IntervalSparseMatrix(a.nrows, b.ncols, pattern.indptr.astype(np.int64), rows, lo, hi)


# -- norm bounds ---------------------------------------------------------------

def norm_bound_1_inf(m: IntervalSparseMatrix, which) -> float:
    """Upper bound on the 1-norm (max column sum) or inf-norm (max row sum)."""
    mag = m.mag_values()
    if mag.size == 0:
        return 0.0
    if which == 1:
        groups = np.repeat(np.arange(m.ncols), np.diff(m.col_ptr))
        ng = m.ncols
    elif which in (np.inf, "inf", float("inf")):
        groups = m.row_idx
        ng = m.nrows
    else:
        raise ValueError("which must be 1 or inf")
    return float(np.max(eft.sum_nonneg_up(mag, groups, ng)))


def spectral_norm_bound(m: IntervalSparseMatrix) -> float:
    """Upper bound on ||X||_2 over members X, as sqrt(||.||_1 ||.||_inf)."""
    n1 = norm_bound_1_inf(m, 1)
    ninf = norm_bound_1_inf(m, np.inf)
    return sqrt_up(_mul_up_scalar(n1, ninf))


def nonneg_spectral_bound(mag: sp.spmatrix) -> float:
    """Same bound for an explicit nonnegative sparse/dense magnitude matrix."""
    mag = sp.csc_matrix(mag)
    im = IntervalSparseMatrix(mag.shape[0], mag.shape[1], mag.indptr.astype(np.int64),
                              mag.indices.astype(np.int64), mag.data, mag.data)
    return spectral_norm_bound(im)
