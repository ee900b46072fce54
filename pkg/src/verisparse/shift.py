"""Shift selection for the augmented matrix.

Nothing here needs to be rigorous: a poor estimate only makes the
verification fail, it can never make a certificate wrong.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .sparse import SparseMatrix


@dataclass(frozen=True)
class ShiftPolicy:
    initial_fraction: float = 0.5
    max_retries_shrink: int = 3
    max_retries_grow: int = 2

    def __post_init__(self):
        if not 0.0 < self.initial_fraction < 1.0:
            raise ValueError("initial_fraction must lie in (0, 1)")
        if self.max_retries_shrink < 0 or self.max_retries_grow < 0:
            raise ValueError("retry budgets must be nonnegative")


class RetryBudgetExhausted(RuntimeError):
    pass


@dataclass
class RetryState:
    """Outcome of the previous attempt; ``last`` is None before the first."""

    last: str | None = None  # "inertia" or "residual"
    theta: float = 0.0
    rho: float = 0.0
    shrinks: int = 0
    grows: int = 0
    # tightest known limits: theta must stay below an inertia failure and
    # above a residual failure
    upper: float = np.inf
    lower: float = 0.0
    history: list = field(default_factory=list)

    def record(self, theta: float, outcome: str, rho: float = 0.0) -> None:
        self.history.append((theta, outcome, rho))
        self.theta, self.rho, self.last = theta, rho, outcome
        if outcome == "inertia":
            self.upper = min(self.upper, theta)
        elif outcome == "residual":
            self.lower = max(self.lower, theta, rho)


def estimate_sigma_min(a: SparseMatrix, tol: float = 1e-2, maxiter: int = 100) -> float:
    """Approximate sigma_min(A) by inverse iteration on A^T A.

    Each step applies (A^T A)^{-1} through an unverified sparse LU of A and
    stops once the Rayleigh quotient changes by less than ``tol`` relatively.
    """
    n = a.nrows
    if n != a.ncols:
        raise ValueError("estimate_sigma_min requires a square matrix")
    if n == 0:
        raise ValueError("empty matrix")
    m = a.to_scipy()
    v = np.full(n, 1.0 / np.sqrt(n))
    try:
        lu = spla.splu(m.tocsc())
    except RuntimeError:
        return _coarse_estimate(m)
    lam_old = None
    lam = None
    for _ in range(maxiter):
        w = lu.solve(lu.solve(v, trans="T"))
        nw = np.linalg.norm(w)
        if not np.isfinite(nw) or nw == 0.0:
            return _coarse_estimate(m)
        v = w / nw
        av = m @ v
        lam = float(av @ av)  # Rayleigh quotient of A^T A
        if lam_old is not None and abs(lam - lam_old) <= tol * abs(lam):
            break
        lam_old = lam
    if lam is None or not np.isfinite(lam) or lam <= 0.0:
        return _coarse_estimate(m)
    return float(np.sqrt(lam))


def _coarse_estimate(m) -> float:
    """1 / ||X|| for an approximate inverse action from a least-squares solve."""
    n = m.shape[0]
    x = spla.lsqr(m, np.ones(n), atol=1e-10, btol=1e-10, iter_lim=10 * n)[0]
    nx = np.linalg.norm(x, np.inf)
    if not np.isfinite(nx) or nx == 0.0:
        raise ArithmeticError("could not estimate the smallest singular value")
    return float(1.0 / nx)


def choose_theta(sigma_est: float, policy: ShiftPolicy, state: RetryState) -> float:
    """Shift for the next attempt.

    The first attempt uses ``initial_fraction * sigma_est``. After an inertia
    failure the previous shift is halved; after a residual failure it becomes
    twice the observed residual bound. Retries never move back across a
    shift that already failed in the opposite direction.
    """
    if state.last is None:
        if not sigma_est > 0.0:
            raise ValueError("sigma_est must be positive")
        return policy.initial_fraction * sigma_est
    if state.last == "inertia":
        if state.shrinks >= policy.max_retries_shrink:
            raise RetryBudgetExhausted("shrink budget exhausted")
        state.shrinks += 1
        theta = 0.5 * state.theta
        if theta <= state.lower:
            raise RetryBudgetExhausted("shrinking would cross a residual failure")
        return theta
    if state.last == "residual":
        if state.grows >= policy.max_retries_grow:
            raise RetryBudgetExhausted("grow budget exhausted")
        state.grows += 1
        theta = 2.0 * state.rho
        if theta <= state.theta:
            theta = 2.0 * state.theta
        if theta >= state.upper:
            raise RetryBudgetExhausted("growing would cross an inertia failure")
        return theta
    raise ValueError(f"unknown outcome {state.last!r}")
