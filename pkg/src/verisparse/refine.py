"""Iterative refinement with verified error bounds.

The solution is carried as an unevaluated sum ``y + z`` of two working
precision vectors. Residuals are computed from error-free products, so
their bound is rigorous; with a certified lower bound ``delta`` on
sigma_min the enclosure
``|x* - y| <= |z| + ||b - A (y + z)||_2 / delta``
follows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from . import __version__, eft
from .interval import div_up, sqrt_up
from .ldlt import LdltFactors, solve_ldlt
from .sparse import SparseMatrix


class LuBreakdown(ArithmeticError):
    pass


@dataclass(frozen=True)
class TolPolicy:
    max_iter: int = 200
    diverge_after: int = 3  # consecutive residual increases
    keep_trace: bool = False


@dataclass
class PairedSolution:
    y: np.ndarray
    z: np.ndarray
    residual_norm_sup: float
    delta: float
    iterations: int
    converged: bool
    method: str = "augmented"
    residual_history: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    @property
    def x(self) -> np.ndarray:
        return self.y + self.z


@dataclass(frozen=True)
class SolutionEnclosure:
    mid: np.ndarray
    rad: np.ndarray

    def __post_init__(self):
        if self.mid.shape != self.rad.shape:
            raise ValueError("mid and rad differ in shape")
        if not (np.all(np.isfinite(self.rad)) and np.all(self.rad >= 0.0)):
            raise ValueError("rad must be finite and nonnegative")

    def contains(self, x) -> bool:
        """Exact membership test; accepts floats or Fractions."""
        from fractions import Fraction

        for m, r, v in zip(self.mid.tolist(), self.rad.tolist(), list(x)):
            v = v if isinstance(v, Fraction) else Fraction(float(v))
            if abs(v - Fraction(m)) > Fraction(r):
                return False
        return True

    def max_rel_rad(self) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(self.rad == 0.0, 0.0, self.rad / np.abs(self.mid))
        return float(np.max(q)) if q.size else 0.0

    def to_json(self) -> dict:
        return {"mid": [float(v) for v in self.mid], "rad": [float(v) for v in self.rad]}


# -- residuals ---------------------------------------------------------------------

def residual_pair(a: SparseMatrix, b: np.ndarray, y: np.ndarray, z: Optional[np.ndarray] = None):
    """Rounded residual b - A (y + z) and a rigorous entrywise error bound.

    Every product is split error-free, so the rounded residual is as
    accurate as if computed in twice the working precision.
    """
    n = a.nrows
    rows = a.row_idx
    cols = a.col_indices()
    vecs = [y] if z is None else [y, z]
    terms = [b]
    groups = [np.arange(n)]
    slack = np.zeros(n)
    for v in vecs:
        p, e = eft._two_prod(-a.values, v[cols])
        bad = eft._untrusted(p, a.values, v[cols])
        terms += [p, np.where(bad, 0.0, e)]
        groups += [rows, rows]
        if np.any(bad):
            slack += np.bincount(rows, weights=bad * eft.UNDERFLOW_ALLOWANCE, minlength=n)
    res, err = eft.grouped_sum(np.concatenate(terms), np.concatenate(groups), n)
    if np.any(slack):
        err = np.where(slack > 0, eft.up(err + eft.up(2.0 * slack)), err)
    return res, err


def norm2_up(mag: np.ndarray) -> float:
    """Upper bound on the 2-norm of a vector given by entrywise upper bounds."""
    if mag.size == 0:
        return 0.0
    sq = eft.mul_up(mag, mag)
    s = eft.sum_nonneg_up(sq, np.zeros(mag.size, dtype=np.int64), 1)[0]
    return sqrt_up(float(s))


def _residual_sup(a, b, y, z):
    r, err = residual_pair(a, b, y, z)
    mag = np.where(err == 0.0, np.abs(r), eft.up(np.abs(r) + err))
    return r, norm2_up(mag)


def stopping_check(residual_norm_sup: float, b_norm: float, delta: float) -> bool:
    """True iff ``residual / ||b||`` (rounded up) is at most ``2**-53 * delta``
    (rounded down)."""
    if not b_norm > 0.0:
        raise ValueError("b_norm must be positive")
    if not delta > 0.0:
        raise ValueError("delta must be positive")
    tol = float(eft.mul_down(delta, eft.UNIT_ROUNDOFF))
    return div_up(float(residual_norm_sup), float(b_norm)) <= tol


# -- refinement loops ----------------------------------------------------------

def _delta_of(d) -> float:
    """Accept a bare float or anything carrying a ``delta`` attribute."""
    return float(getattr(d, "delta", d))


def _refine(a: SparseMatrix, b: np.ndarray, delta: float, x0: np.ndarray, correct, tol: TolPolicy,
            method: str) -> PairedSolution:
    n = a.nrows
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n,):
        raise ValueError("right-hand side has the wrong length")
    if not np.any(b):
        zero = np.zeros(n)
        return PairedSolution(zero, zero.copy(), 0.0, delta, 0, True, method)
    b_norm = norm2_up(np.abs(b))
    y = np.asarray(x0, dtype=np.float64).copy()
    z = np.zeros(n)
    history, trace = [], []
    rises = 0
    converged = False
    it = 0
    rsup = math.inf
    while it < tol.max_iter:
        it += 1
        if tol.keep_trace:
            trace.append((y.copy(), z.copy()))
        r, rsup = _residual_sup(a, b, y, z)
        if history and rsup > history[-1]:
            rises += 1
        else:
            rises = 0
        history.append(rsup)
        if stopping_check(rsup, b_norm, delta):
            converged = True
            break
        if rises >= tol.diverge_after or not math.isfinite(rsup):
            break
        e = correct(r)
        if not np.all(np.isfinite(e)):
            break
        s = z + e
        y, z = eft._two_sum(y, s)
    if not converged and it >= tol.max_iter:
        # report the residual of the final iterate
        _, rsup = _residual_sup(a, b, y, z)
    return PairedSolution(y, z, float(rsup), delta, it, converged, method, history, trace)


def refine_augmented(a: SparseMatrix, b, F: LdltFactors, delta: float,
                     tol: TolPolicy = TolPolicy()) -> PairedSolution:
    """Refinement through the factors of [[0, A^T], [A, 0]] + theta I.

    Each correction solves with the right-hand side (A^T r; r) and keeps the
    leading half. ``delta`` is the certified lower bound on sigma_min(a).
    """
    delta = _delta_of(delta)
    n = a.nrows
    if F.n != 2 * n:
        raise ValueError("factors do not match the augmented dimension")
    at = a.to_scipy().T.tocsr()

    def correct(r):
        return solve_ldlt(F, np.concatenate((at @ r, r)))[:n]

    b = np.asarray(b, dtype=np.float64)
    x0 = correct(b)
    return _refine(a, b, delta, x0, correct, tol, "augmented")


def refine_lu(a: SparseMatrix, b, delta: float, tol: TolPolicy = TolPolicy()) -> PairedSolution:
    """Classical refinement with an unverified sparse LU of ``a``."""
    delta = _delta_of(delta)
    try:
        lu = spla.splu(a.to_scipy().tocsc())
    except RuntimeError as exc:
        raise LuBreakdown(str(exc)) from exc
    b = np.asarray(b, dtype=np.float64)
    x0 = lu.solve(b)
    return _refine(a, b, delta, x0, lu.solve, tol, "lu")


def enclose_solution(ps: PairedSolution, delta: Optional[float] = None) -> SolutionEnclosure:
    """mid = y, rad = |z| + ||b - A(y+z)|| / delta, rounded up."""
    delta = ps.delta if delta is None else _delta_of(delta)
    if not delta > 0.0:
        raise ValueError("enclosure needs a positive delta")
    if delta > ps.delta:
        raise ValueError("delta exceeds the one the residual was certified with")
    t = div_up(ps.residual_norm_sup, delta) if ps.residual_norm_sup else 0.0
    rad = eft.add_up(np.abs(ps.z), t) if t else np.abs(ps.z).copy()
    return SolutionEnclosure(ps.y.copy(), np.asarray(rad, dtype=np.float64))


def unscale_enclosure(enc: SolutionEnclosure, c: np.ndarray) -> SolutionEnclosure:
    """Enclosure of C x from one of x, C diagonal with power-of-two entries."""
    mid = enc.mid * c
    rad = np.asarray(eft.mul_up(enc.rad, np.abs(c)), dtype=np.float64)
    # scaling by a power of two is exact unless the result is subnormal
    inexact = (mid / c) != enc.mid
    if np.any(inexact):
        rad = np.where(inexact, eft.up(rad + eft.ETA), rad)
    return SolutionEnclosure(mid, rad)


def solve_with_certificate(a: SparseMatrix, b, cert, method: str = "augmented",
                           tol: TolPolicy = TolPolicy()):
    """Refine on the matrix the certificate was issued for and map the
    enclosure back to the original unknowns. Returns (enclosure, paired)."""
    if not cert.verified:
        raise ValueError("certificate is not verified")
    eq = cert.equilibration
    work = a if cert.scaled is None else cert.scaled
    bb = np.asarray(b, dtype=np.float64)
    if bb.shape != (a.nrows,):
        raise ValueError("right-hand side has the wrong length")
    if eq is not None:
        bb = eq.scale_rhs(bb)
    if method == "augmented":
        if cert.factors is None:
            raise ValueError("certificate carries no factors")
        ps = refine_augmented(work, bb, cert.factors, cert.delta, tol)
    elif method == "lu":
        ps = refine_lu(work, bb, cert.delta, tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    enc = enclose_solution(ps)
    if eq is not None:
        enc = unscale_enclosure(enc, eq.c)
    return enc, ps


def _fin(x: float):
    return float(x) if math.isfinite(x) else None


def solution_report(enc: SolutionEnclosure, ps: PairedSolution, certificate: Optional[dict] = None) -> dict:
    """JSON-ready report; infinities are written as null."""
    out = {
        "version": __version__,
        "method": ps.method,
        "converged": ps.converged,
        "iterations": ps.iterations,
        "residual_norm_sup": _fin(ps.residual_norm_sup),
        "delta": ps.delta,
        "max_rel_rad": _fin(enc.max_rel_rad()),
    }
    out.update(enc.to_json())
    out["certificate"] = certificate
    return out


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=1)
