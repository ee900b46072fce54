"""Rigorous lower bound on the smallest singular value of a sparse matrix.

The matrix ``[[0, A^T], [A, 0]] + theta I`` has eigenvalues ``theta +- sigma_i``.
If an approximate LDL^T factorization of it has exactly ``n`` positive and
``n`` negative pivots and the residual satisfies ``||M - L D L^T||_2 <= rho``,
then ``sigma_min(A) >= theta - rho``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import __version__, eft
from .interval import div_up, sub_down
from .ldlt import LdltBreakdown, LdltFactors, inertia, ldlt
from .ordering import fill_reducing_order
from .precondition import Equilibration, StructurallySingularError, equilibrate, sigma_back_propagate
from .shift import RetryBudgetExhausted, RetryState, ShiftPolicy, choose_theta, estimate_sigma_min
from .sparse import IntervalSparseMatrix, SparseMatrix, _values_on, augment, spectral_norm_bound, spgemm_interval

VERIFIED = "verified"
FAILED_INERTIA = "failed_inertia"
FAILED_RESIDUAL = "failed_residual"
FAILED_BREAKDOWN = "failed_breakdown"
STATUSES = (VERIFIED, FAILED_INERTIA, FAILED_RESIDUAL, FAILED_BREAKDOWN)

# triples handled per batch by the compensated residual
_CHUNK = 1 << 20
# below this many triples the accurate residual costs next to nothing
SMALL_EXPANSION = 1 << 16


@dataclass
class Certificate:
    """Outcome of :func:`verify_sigmin`.

    ``delta`` bounds sigma_min of the matrix that was factorized (the scaled
    one when equilibration is on); ``delta_original`` bounds sigma_min of the
    input matrix. ``factors`` and ``scaled`` are kept in memory for solves
    and are not serialized.
    """

    status: str
    n: int
    theta: float = 0.0
    rho: float = math.inf
    npe: int = 0
    nne: int = 0
    nze: int = 0
    delta: float = 0.0
    inv_norm_bound: float = math.inf
    delta_original: float = 0.0
    inv_norm_bound_original: float = math.inf
    equilibration: Optional[Equilibration] = None
    attempts: list = field(default_factory=list)
    order: Optional[np.ndarray] = None
    pivoting: bool = True
    acc: bool = False
    fingerprint: Optional[dict] = None
    message: str = ""
    factors: Optional[LdltFactors] = field(default=None, repr=False, compare=False)
    scaled: Optional[SparseMatrix] = field(default=None, repr=False, compare=False)

    @property
    def verified(self) -> bool:
        return self.status == VERIFIED

    def to_json(self) -> dict:
        def fin(x):
            return float(x) if math.isfinite(x) else None

        return {
            "version": __version__,
            "status": self.status,
            "n": self.n,
            "theta": float(self.theta),
            "rho": fin(self.rho),
            "npe": self.npe,
            "nne": self.nne,
            "nze": self.nze,
            "delta": float(self.delta),
            "inv_norm_bound": fin(self.inv_norm_bound),
            "delta_original": float(self.delta_original),
            "inv_norm_bound_original": fin(self.inv_norm_bound_original),
            "equilibration": None if self.equilibration is None else self.equilibration.to_json(),
            "attempts": [{k: (fin(v) if isinstance(v, float) else v) for k, v in at.items()}
                         for at in self.attempts],
            "order": None if self.order is None else [int(i) for i in self.order],
            "pivoting": self.pivoting,
            "acc": self.acc,
            "fingerprint": self.fingerprint,
            "message": self.message,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Certificate":
        def num(x):
            return math.inf if x is None else float(x)

        eq = d.get("equilibration")
        order = d.get("order")
        return cls(
            status=d["status"], n=int(d["n"]), theta=float(d["theta"]), rho=num(d["rho"]),
            npe=int(d["npe"]), nne=int(d["nne"]), nze=int(d["nze"]), delta=float(d["delta"]),
            inv_norm_bound=num(d["inv_norm_bound"]), delta_original=float(d["delta_original"]),
            inv_norm_bound_original=num(d["inv_norm_bound_original"]),
            equilibration=None if eq is None else Equilibration.from_json(eq),
            attempts=list(d.get("attempts", [])),
            order=None if order is None else np.asarray(order, dtype=np.int64),
            pivoting=bool(d.get("pivoting", True)), acc=bool(d.get("acc", False)),
            fingerprint=d.get("fingerprint"), message=d.get("message", ""),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    @classmethod
    def loads(cls, s: str) -> "Certificate":
        return cls.from_json(json.loads(s))


# -- residual bound -----------------------------------------------------------

def shifted(abar: SparseMatrix, theta: float) -> SparseMatrix:
    """abar + theta I; exact because the diagonal of abar is zero."""
    n = abar.nrows
    m = abar.to_scipy() + theta * sp.identity(n, format="csc")
    return SparseMatrix.from_scipy(m)


def _permuted(m: SparseMatrix, perm: np.ndarray) -> sp.csc_matrix:
    return sp.csc_matrix(m.to_scipy()[perm][:, perm])


def residual_norm_bound(abar: SparseMatrix, theta: float, F: LdltFactors, acc: bool = False) -> float:
    """Rigorous upper bound on ||P (abar + theta I) P^T - L D L^T||_2.

    ``acc=True`` expands every entry of L D L^T into error-free terms and sums
    them accurately, so the bound tracks the true residual and vanishes when
    the factorization is exact. ``acc=False`` forms the midpoint-radius
    interval product L (D L^T) and subtracts the shifted matrix; it is much
    cheaper on large factors, so the accurate path is only taken when the
    expansion is small anyway.
    """
    if abar.nrows != F.n:
        raise ValueError("residual_norm_bound: dimension mismatch")
    m = _permuted(shifted(abar, theta), F.perm)
    big = max(np.max(np.abs(F.L.values), initial=0.0), np.max(np.abs(F.D.diag), initial=0.0),
              np.max(np.abs(F.D.sub), initial=0.0))
    if big < 2.0 ** 300 and (acc or _expansion_size(F) <= SMALL_EXPANSION):
        return _residual_compensated(m, F)
    return _residual_interval(m, F, sharp=False)


def _expansion_size(F: LdltFactors) -> int:
    cnt = np.diff(F.L.col_ptr)
    dk, dl, _ = _d_entries(F)
    return int(np.sum(cnt[dk] * cnt[dl]))


def _d_matrix(F: LdltFactors) -> SparseMatrix:
    return SparseMatrix.from_scipy(F.D.to_sparse())


def _residual_interval(m: sp.csc_matrix, F: LdltFactors, sharp: bool = False) -> float:
    L = IntervalSparseMatrix.from_point(F.L)
    Lt = IntervalSparseMatrix.from_point(F.L.transpose())
    D = IntervalSparseMatrix.from_point(_d_matrix(F))
    prod = spgemm_interval(L, spgemm_interval(D, Lt, sharp=sharp), sharp=sharp)
    # R = M - prod on the union pattern
    lo_p = prod._csc(prod.lo)
    hi_p = prod._csc(prod.hi)
    pat = sp.csc_matrix(abs(lo_p) + abs(hi_p) + abs(m))
    pat.sum_duplicates()
    pat.sort_indices()
    pat.data[:] = 1.0
    rows = pat.indices.astype(np.int64)
    cols = np.repeat(np.arange(pat.shape[1]), np.diff(pat.indptr))
    mv = _values_on(rows, cols, m)
    plo = _values_on(rows, cols, lo_p)
    phi = _values_on(rows, cols, hi_p)
    lo = eft.add_down(mv, -phi)
    hi = eft.add_up(mv, -plo)
    r = IntervalSparseMatrix(pat.shape[0], pat.shape[1], pat.indptr.astype(np.int64), rows, lo, hi)
    return spectral_norm_bound(r)


def _d_entries(F: LdltFactors):
    """(k, l, d) for every nonzero of D, both triangles."""
    D = F.D
    k = np.flatnonzero(D.diag)
    ks, ls, ds = [k], [k], [D.diag[k]]
    s = np.flatnonzero(D.sub)
    ks += [s + 1, s]
    ls += [s, s + 1]
    ds += [D.sub[s], D.sub[s]]
    return np.concatenate(ks), np.concatenate(ls), np.concatenate(ds)


def _group(key: np.ndarray, nn: int):
    """(distinct keys, group index per key) without sorting when keys are dense."""
    if nn <= 1 << 23:
        cnt = np.bincount(key, minlength=nn)
        ukey = np.flatnonzero(cnt)
        where = np.empty(nn, dtype=np.int64)
        where[ukey] = np.arange(ukey.size)
        return ukey, where[key]
    return np.unique(key, return_inverse=True)


def _residual_compensated(m: sp.csc_matrix, F: LdltFactors) -> float:
    n = F.n
    Lp, Li, Lv = F.L.col_ptr, F.L.row_idx, F.L.values
    cnt = np.diff(Lp)
    dk, dl, dv = _d_entries(F)
    sizes = cnt[dk] * cnt[dl]
    # chunk boundaries over the D entries
    csum = np.cumsum(sizes)
    bounds = [0]
    while bounds[-1] < dk.size:
        start = csum[bounds[-1] - 1] if bounds[-1] else 0
        nxt = int(np.searchsorted(csum, start + _CHUNK, side="right"))
        bounds.append(max(nxt, bounds[-1] + 1))
    keys_all, res_all, err_all = [], [], []
    for c0, c1 in zip(bounds[:-1], bounds[1:]):
        k, l, d = dk[c0:c1], dl[c0:c1], dv[c0:c1]
        mk, ml = cnt[k], cnt[l]
        sz = mk * ml
        tot = int(sz.sum())
        if tot == 0:
            continue
        ent = np.repeat(np.arange(k.size), sz)
        off = np.arange(tot) - np.repeat(np.cumsum(sz) - sz, sz)
        pa = Lp[k][ent] + off // ml[ent]
        pb = Lp[l][ent] + off % ml[ent]
        i, j = Li[pa], Li[pb]
        keep = i >= j
        i, j, lik, ljl, dd = i[keep], j[keep], Lv[pa[keep]], Lv[pb[keep]], d[ent[keep]]
        # L_ik * d * L_jl = p1 + e1 + p2 + e2 exactly (barring underflow)
        p, e = eft._two_prod(dd, ljl)
        p1, e1 = eft._two_prod(lik, p)
        p2, e2 = eft._two_prod(lik, e)
        unsafe = (eft._untrusted(p, dd, ljl).astype(np.int64) + eft._untrusted(p1, lik, p)
                  + eft._untrusted(p2, lik, e))
        ukey, grp = _group(i * n + j, n * n)
        g = ukey.size
        terms = -np.concatenate((p1, e1, p2, e2))
        res, err = eft.grouped_sum(terms, np.tile(grp, 4), g)
        slack = np.bincount(grp, weights=unsafe * eft.UNDERFLOW_ALLOWANCE, minlength=g)
        if np.any(slack):
            f = eft.inflate_sum_bound(int(np.bincount(grp).max()))
            err = np.where(slack > 0, eft.up(err + eft.up(slack * f)), err)
        keys_all.append(ukey)
        res_all.append(res)
        err_all.append(err)
    # add the shifted matrix, lower triangle
    mc = m.tocoo()
    low = mc.row >= mc.col
    keys_all.append(mc.row[low].astype(np.int64) * n + mc.col[low])
    res_all.append(mc.data[low])
    err_all.append(np.zeros(int(low.sum())))

    keys = np.concatenate(keys_all)
    ukey, grp = _group(keys, n * n)
    g = ukey.size
    res, err = eft.grouped_sum(np.concatenate(res_all), grp, g)
    partial = np.concatenate(err_all)
    if np.any(partial):
        extra = eft.sum_nonneg_up(partial, grp, g)
        err = np.where(extra > 0, eft.up(err + extra), err)
    mag = np.where(err == 0.0, np.abs(res), eft.up(np.abs(res) + err))
    # symmetric: ||R||_2 <= ||R||_inf, every off-diagonal entry counts in two rows
    i, j = ukey // n, ukey % n
    off = i != j
    rows = np.concatenate((i, j[off]))
    vals = np.concatenate((mag, mag[off]))
    if vals.size == 0:
        return 0.0
    return float(np.max(eft.sum_nonneg_up(vals, rows, n)))


# -- pipeline ------------------------------------------------------------------

def _round_short(x: float, bits: int = 8) -> float:
    """x rounded to nearest with a ``bits``-bit significand."""
    m, e = math.frexp(x)
    return math.ldexp(round(math.ldexp(m, bits)), e - bits)


def verify_sigmin(a: SparseMatrix, precond: bool = False, acc: bool = False,
                  policy: ShiftPolicy = ShiftPolicy(), sigma_est: float | None = None,
                  pivoting: bool = True) -> Certificate:
    """Try to certify a positive lower bound on sigma_min(a).

    Never raises for singular or ill-conditioned input; the returned status
    tells whether the bound holds. Raises ValueError for non-square input or
    non-finite entries.
    """
    if a.nrows != a.ncols:
        raise ValueError("verify_sigmin requires a square matrix")
    if not np.all(np.isfinite(a.values)):
        raise ValueError("matrix has non-finite entries")
    n = a.nrows
    fp = a.fingerprint()
    cert = Certificate(status=FAILED_BREAKDOWN, n=n, pivoting=pivoting, acc=acc, fingerprint=fp)
    if n == 0:
        cert.message = "empty matrix"
        return cert
    eq = None
    work = a
    if precond:
        try:
            eq, work = equilibrate(a)
        except (StructurallySingularError, ArithmeticError) as exc:
            cert.message = f"equilibration failed: {exc}"
            return cert
    cert.equilibration = eq
    cert.scaled = work
    abar = augment(work)
    order = fill_reducing_order(abar)
    cert.order = order
    if sigma_est is None:
        try:
            sigma_est = estimate_sigma_min(work)
        except (ArithmeticError, ValueError) as exc:
            cert.message = f"no singular value estimate: {exc}"
            return cert
    if not (sigma_est > 0.0 and math.isfinite(sigma_est)):
        cert.message = "singular value estimate is not positive"
        return cert

    state = RetryState()
    while True:
        try:
            theta = choose_theta(sigma_est, policy, state)
        except RetryBudgetExhausted as exc:
            cert.status = FAILED_INERTIA if state.last == "inertia" else FAILED_RESIDUAL
            cert.message = str(exc)
            return cert
        theta = _round_short(theta)
        if not (theta > 0.0 and math.isfinite(theta)):
            cert.message = "shift left the representable range"
            return cert
        cert.theta = theta
        try:
            F = ldlt(shifted(abar, theta), order=order, pivoting=pivoting)
        except LdltBreakdown as exc:
            cert.status = FAILED_BREAKDOWN
            cert.message = str(exc)
            cert.attempts.append({"theta": theta, "outcome": "breakdown"})
            return cert
        npe, nne, nze = inertia(F.D)
        cert.npe, cert.nne, cert.nze = npe, nne, nze
        if npe != n or nne != n:
            cert.attempts.append({"theta": theta, "outcome": "inertia", "npe": npe, "nne": nne, "nze": nze})
            state.record(theta, "inertia")
            continue
        rho = residual_norm_bound(abar, theta, F, acc=acc)
        cert.rho = rho
        if not rho < theta:
            cert.attempts.append({"theta": theta, "outcome": "residual", "rho": rho})
            state.record(theta, "residual", rho)
            continue
        cert.attempts.append({"theta": theta, "outcome": "verified", "rho": rho})
        delta = sub_down(theta, rho)
        cert.status = VERIFIED
        cert.delta = delta
        cert.inv_norm_bound = div_up(1.0, delta)
        cert.delta_original = sigma_back_propagate(delta, eq)
        cert.inv_norm_bound_original = (div_up(1.0, cert.delta_original)
                                        if cert.delta_original > 0.0 else math.inf)
        cert.factors = F
        cert.message = ""
        return cert


def check_certificate(a: SparseMatrix, cert: Certificate) -> bool:
    """Independently re-derive a verified certificate's inequality chain."""
    try:
        if cert.status != VERIFIED or cert.n != a.nrows or a.nrows != a.ncols or cert.order is None:
            return False
        if cert.fingerprint is not None and cert.fingerprint != a.fingerprint():
            return False
        work = a if cert.equilibration is None else cert.equilibration.apply(a)
        abar = augment(work)
        F = ldlt(shifted(abar, cert.theta), order=cert.order, pivoting=cert.pivoting)
        if inertia(F.D) != (cert.n, cert.n, 0) or (cert.npe, cert.nne, cert.nze) != (cert.n, cert.n, 0):
            return False
        rho = residual_norm_bound(abar, cert.theta, F, acc=cert.acc)
        if not (rho <= cert.rho < cert.theta):
            return False
        delta = sub_down(cert.theta, cert.rho)
        if not (0.0 < cert.delta <= delta):
            return False
        if not cert.inv_norm_bound >= div_up(1.0, cert.delta):
            return False
        if not cert.delta_original <= sigma_back_propagate(cert.delta, cert.equilibration):
            return False
        if cert.delta_original > 0.0 and not cert.inv_norm_bound_original >= div_up(1.0, cert.delta_original):
            return False
        return True
    except (ValueError, ArithmeticError):
        return False
