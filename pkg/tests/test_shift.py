import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import sigma_min
from verisparse.generators import constructed_spectrum
from verisparse.shift import RetryBudgetExhausted, RetryState, ShiftPolicy, choose_theta, estimate_sigma_min
from verisparse.sparse import SparseMatrix
from verisparse.verify import verify_sigmin


def test_estimate_examples():
    assert estimate_sigma_min(SparseMatrix.identity(5)) == pytest.approx(1.0, rel=1e-2)
    assert estimate_sigma_min(SparseMatrix.from_dense(np.diag([1.0, 10.0]))) == pytest.approx(1.0, rel=1e-2)


def test_estimate_tracks_svd(rng):
    for cond in (1e2, 1e5, 1e8):
        a, _ = constructed_spectrum(60, cond, rng)
        s = sigma_min(a.to_dense())
        assert estimate_sigma_min(a) == pytest.approx(s, rel=0.2)


def test_estimate_singular_falls_back():
    a = SparseMatrix.from_dense([[1.0, 1.0], [1.0, 1.0]])
    est = estimate_sigma_min(a)
    assert est > 0.0 and np.isfinite(est)


def test_policy_validation():
    with pytest.raises(ValueError):
        ShiftPolicy(initial_fraction=1.0)
    with pytest.raises(ValueError):
        ShiftPolicy(max_retries_shrink=-1)


def test_first_and_retry_shifts():
    p = ShiftPolicy()
    st_ = RetryState()
    assert choose_theta(1.0, p, st_) == 0.5
    st_.record(0.5, "inertia")
    assert choose_theta(1.0, p, st_) == 0.25

    st2 = RetryState()
    st2.record(0.5, "residual", rho=0.3)
    assert choose_theta(1.0, p, st2) == pytest.approx(0.6)


def test_budgets():
    p = ShiftPolicy()
    s = RetryState()
    theta = choose_theta(1.0, p, s)
    for _ in range(3):
        s.record(theta, "inertia")
        theta = choose_theta(1.0, p, s)
    s.record(theta, "inertia")
    with pytest.raises(RetryBudgetExhausted):
        choose_theta(1.0, p, s)

    s = RetryState()
    theta = 0.1
    for _ in range(2):
        s.record(theta, "residual", rho=theta * 0.9)
        theta = choose_theta(1.0, p, s)
    s.record(theta, "residual", rho=theta)
    with pytest.raises(RetryBudgetExhausted):
        choose_theta(1.0, p, s)


@given(st.lists(st.tuples(st.sampled_from(["inertia", "residual"]), st.floats(0.0, 2.0)), max_size=6),
       st.floats(1e-6, 1e6))
def test_retries_never_cross_failures(events, est):
    p = ShiftPolicy()
    s = RetryState()
    try:
        theta = choose_theta(est, p, s)
        for outcome, rel in events:
            rho = rel * theta if outcome == "residual" else 0.0
            s.record(theta, outcome, rho)
            theta = choose_theta(est, p, s)
            assert s.lower < theta < s.upper
    except RetryBudgetExhausted:
        pass
    assert s.shrinks <= p.max_retries_shrink and s.grows <= p.max_retries_grow


@pytest.mark.parametrize("factor", [0.1, 10.0])
def test_wrong_estimate_stays_sound(rng, factor):
    for _ in range(5):
        a, _ = constructed_spectrum(40, 1e4, rng)
        s = sigma_min(a.to_dense())
        cert = verify_sigmin(a, sigma_est=factor * s)
        if cert.verified:
            assert cert.delta <= s
        else:
            assert cert.status in ("failed_inertia", "failed_residual")
