"""Equilibration: permute large entries onto the diagonal and rescale by
exact powers of two, so the scaled matrix is computed without rounding."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import NegativeCycleError, shortest_path

from . import eft
from .interval import div_down
from .sparse import SparseMatrix


class StructurallySingularError(ValueError):
    """The nonzero pattern admits no perfect matching."""


@dataclass(frozen=True)
class Equilibration:
    """Row permutation ``perm`` and power-of-two scalings.

    The scaled matrix is ``diag(r) @ A[perm, :] @ diag(c)``: row ``k`` of the
    result is row ``perm[k]`` of ``A``.
    """

    perm: np.ndarray
    r: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        for v in (self.r, self.c):
            m, _ = np.frexp(np.abs(v))
            if not (np.all(np.isfinite(v)) and np.all(m == 0.5)):
                raise ValueError("scalings must be finite nonzero powers of two")

    @property
    def n(self) -> int:
        return int(self.perm.size)

    def apply(self, a: SparseMatrix) -> SparseMatrix:
        """R P A C; exact barring underflow/overflow since scalings are powers of two."""
        m = a.to_scipy()[self.perm, :]
        m = sp.diags(self.r) @ m @ sp.diags(self.c)
        out = SparseMatrix.from_scipy(m)
        _check_exact_scaling(a, self, out)
        return out

    def scale_rhs(self, b: np.ndarray) -> np.ndarray:
        return self.r * np.asarray(b, dtype=np.float64)[self.perm]

    def to_json(self) -> dict:
        return {"perm": self.perm.tolist(), "r": [float(x) for x in self.r], "c": [float(x) for x in self.c]}

    @classmethod
    def from_json(cls, d: dict) -> "Equilibration":
        return cls(np.asarray(d["perm"], dtype=np.int64), np.asarray(d["r"], dtype=np.float64),
                   np.asarray(d["c"], dtype=np.float64))


def _check_exact_scaling(a: SparseMatrix, eq: Equilibration, out: SparseMatrix) -> None:
    inv = np.empty_like(eq.perm)
    inv[eq.perm] = np.arange(eq.n)
    rows = inv[a.row_idx]
    cols = a.col_indices()
    v = a.values * eq.r[rows] * eq.c[cols]
    back = v / eq.r[rows] / eq.c[cols]
    if not np.array_equal(back, a.values):
        raise ArithmeticError("power-of-two scaling underflowed or overflowed")


def pow2_round(s: float) -> float:
    """sign(s) * 2**z with z the integer nearest to log2|s|.

    For a binary64 s, log2|s| is never an exact half-integer, so no tie
    rule is ever exercised; the comparison against 2**(e - 1/2) is exact.
    """
    if s == 0.0 or not math.isfinite(s):
        raise ValueError("pow2_round needs a finite nonzero argument")
    m, e = math.frexp(abs(s))  # |s| = m 2**e, m in [0.5, 1)
    p, err = eft._two_prod(m, m)
    # m > 2**-0.5  <=>  m*m > 1/2 (exactly, via the error-free product)
    z = e if (p > 0.5 or (p == 0.5 and err > 0.0)) else e - 1
    return math.copysign(math.ldexp(1.0, z), s)


def _max_product_matching(a: SparseMatrix):
    """Row-to-column matching maximizing prod |a_ij| with MC64-style duals.

    With costs c_ij = log colmax_j - log |a_ij| >= 0, the column duals v are
    shortest-path distances of the difference constraints implied by
    u_i + v_j <= c_ij (equality on matched edges). Returns
    (match, row_of_col, v, predecessor tree, colmax).
    """
    n = a.nrows
    m = a.to_scipy()
    m.data = np.abs(m.data)
    m.eliminate_zeros()
    if m.nnz == 0:
        raise StructurallySingularError("matrix has no nonzero entries")
    colmax = np.asarray(m.max(axis=0).todense()).ravel()
    if np.any(colmax == 0.0):
        raise StructurallySingularError("empty column")
    rows = m.indices
    cols = np.repeat(np.arange(n), np.diff(m.indptr))
    cost = np.log(colmax[cols]) - np.log(m.data)
    # dense assignment; missing edges cost more than any full matching on the pattern
    big = (float(cost.max()) + 1.0) * (n + 1)
    dense = np.full((n, n), big)
    dense[rows, cols] = cost
    row_ind, col_ind = linear_sum_assignment(dense)
    present = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    if np.any(np.asarray(present[row_ind, col_ind]).ravel() == 0.0):
        raise StructurallySingularError("no perfect matching on the nonzero pattern")
    match = np.empty(n, dtype=np.int64)
    match[row_ind] = col_ind
    row_of_col = np.empty(n, dtype=np.int64)
    row_of_col[match] = np.arange(n)
    # duals from difference constraints v_j - v_{match(i)} <= c_ij - c_{i,match(i)}
    cmatch = np.log(colmax[match]) - np.log(np.abs(a.to_scipy()[np.arange(n), match]).A.ravel())
    src = match[rows]
    wt = cost - cmatch[rows]
    keep = src != cols
    # super source n with zero-weight edges to every column node
    g_rows = np.concatenate((src[keep], np.full(n, n)))
    g_cols = np.concatenate((cols[keep], np.arange(n)))
    g_w = np.concatenate((wt[keep], np.zeros(n)))
    dist, pred = _potentials(g_rows, g_cols, g_w, n + 1)
    return match, row_of_col, dist[:n], pred[:n], colmax


def _potentials(rows, cols, w, size):
    # csgraph drops explicit zero weights; nudge them to the smallest positive
    # float, far below the log-domain resolution
    for slack in (0.0, 1e-13, 1e-10):
        ww = w + slack * (1.0 + np.abs(w))
        ww = np.where(ww == 0.0, eft.ETA, ww)
        graph = sp.csr_matrix((ww, (rows, cols)), shape=(size, size))
        try:
            dist, pred = shortest_path(graph, method="BF", directed=True, indices=size - 1,
                                       return_predecessors=True)
        except NegativeCycleError:
            # near-ties in the log costs; relax slightly and retry
            continue
        dist, pred = dist[:-1], pred[:-1]
        try:
            _tree_order(pred, size - 1)
        except StructurallySingularError:
            # a tie cycle slipped into the predecessor tree
            continue
        return dist, pred
    raise StructurallySingularError("could not compute matching duals")


def equilibrate(a: SparseMatrix):
    """Return (Equilibration, scaled matrix).

    Before power-of-two rounding the matched entries have magnitude 1 and all
    other entries magnitude <= 1 (up to roundoff of the dual computation).
    """
    if a.nrows != a.ncols:
        raise ValueError("equilibrate requires a square matrix")
    n = a.nrows
    with np.errstate(over="ignore", divide="ignore"):
        r_raw, c_raw, match = equilibration_scalings(a)
    good = (r_raw > 0.0) & (c_raw > 0.0) & np.isfinite(r_raw) & np.isfinite(c_raw)
    if not np.all(good):
        raise ArithmeticError("scaling factors leave the floating-point range")
    perm = np.empty(n, dtype=np.int64)
    perm[match] = np.arange(n)  # row i goes to position match[i]
    # scaled row k is original row perm[k]
    r2 = np.array([pow2_round(x) for x in r_raw[perm]])
    c2 = np.array([pow2_round(x) for x in c_raw])
    eq = Equilibration(perm, r2, c2)
    return eq, eq.apply(a)


def equilibration_scalings(a: SparseMatrix):
    """Unrounded row/column scalings (indexed by original rows/columns) and
    the matching (column matched to each row)."""
    n = a.nrows
    match, row_of_col, dist, pred, colmax = _max_product_matching(a)
    absA = sp.csr_matrix(abs(a.to_scipy()))
    r = np.zeros(n)
    c = np.zeros(n)
    # walk the shortest-path tree from the roots so tight edges are exactly tight
    depth_order = _tree_order(pred, n)
    for j in depth_order:
        p = pred[j]
        if p < 0 or p == n:
            c[j] = 1.0 / colmax[j]
        else:
            i = row_of_col[p]
            c[j] = 1.0 / (r[i] * absA[i, j])
        i = row_of_col[j]
        r[i] = 1.0 / (absA[i, j] * c[j])
    return r, c, match


def _tree_order(pred: np.ndarray, n: int) -> list:
    """Columns ordered so every parent precedes its children."""
    children = [[] for _ in range(n + 1)]
    for j in range(n):
        p = pred[j]
        children[n if p < 0 else p].append(j)
    out = []
    stack = list(reversed(children[n]))
    while stack:
        j = stack.pop()
        out.append(j)
        stack.extend(reversed(children[j]))
    if len(out) != n:
        raise StructurallySingularError("inconsistent dual tree")
    return out


def sigma_back_propagate(delta_tilde: float, eq: Equilibration | None) -> float:
    """Lower bound on sigma_min(A) from one on sigma_min(R P A C)."""
    if delta_tilde < 0:
        raise ValueError("delta_tilde must be nonnegative")
    if eq is None:
        return float(delta_tilde)
    scale = float(np.max(np.abs(eq.r))) * float(np.max(np.abs(eq.c)))  # product of powers of two
    if not math.isfinite(scale) or scale == 0.0:
        return 0.0
    return div_down(float(delta_tilde), scale)
