import json
import math
from importlib import resources

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import sigma_min, sigma_min_reliable
from verisparse.generators import constructed_spectrum, random_sparse
from verisparse.ldlt import LdltFactors, ldlt
from verisparse.sparse import SparseMatrix, augment
from verisparse.verify import (Certificate, check_certificate, residual_norm_bound, shifted,
                               verify_sigmin)


def cert_schema():
    return json.loads(resources.files("verisparse").joinpath("schemas/certificate.schema.json").read_text())


@pytest.mark.parametrize("acc", [False, True])
def test_identity_exact(acc):
    cert = verify_sigmin(SparseMatrix.identity(3), acc=acc)
    assert cert.verified
    assert cert.theta == 0.5
    assert cert.rho == 0.0
    assert cert.delta == 0.5
    assert (cert.npe, cert.nne, cert.nze) == (3, 3, 0)
    assert cert.inv_norm_bound == 2.0


def test_singular_fails():
    cert = verify_sigmin(SparseMatrix.from_dense([[1.0, 1.0], [1.0, 1.0]]))
    assert not cert.verified
    assert cert.delta == 0.0
    assert cert.status in ("failed_inertia", "failed_residual", "failed_breakdown")


def test_input_errors():
    with pytest.raises(ValueError):
        verify_sigmin(SparseMatrix.from_dense(np.ones((2, 3))))
    with pytest.raises(ValueError):
        verify_sigmin(SparseMatrix.from_dense([[1.0, np.nan], [0.0, 1.0]]))


@pytest.mark.parametrize("precond", [False, True])
@pytest.mark.parametrize("acc", [False, True])
def test_sound_against_svd(rng, precond, acc):
    for cond in (1e1, 1e4, 1e8):
        for _ in range(3):
            n = int(rng.integers(5, 80))
            a, _ = constructed_spectrum(n, cond, rng)
            cert = verify_sigmin(a, precond=precond, acc=acc)
            assert cert.verified
            s = sigma_min(a.to_dense())
            assert 0.0 < cert.delta_original <= s
            assert cert.inv_norm_bound_original >= 1.0 / s
            assert check_certificate(a, cert)


@settings(max_examples=40)
@given(st.integers(1, 25), st.floats(0.0, 3.0), st.integers(0, 2**32 - 1))
def test_never_overclaims(n, diag, seed):
    rng = np.random.default_rng(seed)
    a = random_sparse(n, 0.4, rng, diag_shift=diag)
    cert = verify_sigmin(a, precond=bool(seed & 1))
    if cert.verified:
        assert cert.rho < cert.theta
        assert cert.delta_original <= sigma_min_reliable(a.to_dense())


def test_certificate_check_and_tamper(rng):
    a, _ = constructed_spectrum(30, 1e3, rng)
    cert = verify_sigmin(a, precond=True)
    assert check_certificate(a, cert)
    again = Certificate.loads(cert.dumps())
    assert check_certificate(a, again)
    assert again.dumps() == cert.dumps()
    again.delta *= 1.1
    assert not check_certificate(a, again)
    other = Certificate.loads(cert.dumps())
    other.rho = other.rho / 4
    assert not check_certificate(a, other)
    b = SparseMatrix.from_dense(a.to_dense() * 1.5)
    assert not check_certificate(b, Certificate.loads(cert.dumps()))


def test_failed_certificate_serializes():
    cert = verify_sigmin(SparseMatrix.from_dense([[1.0, 1.0], [1.0, 1.0]]))
    d = json.loads(cert.dumps())
    jsonschema.validate(d, cert_schema())
    assert not check_certificate(SparseMatrix.from_dense([[1.0, 1.0], [1.0, 1.0]]), cert)


def test_schema_valid(rng):
    for precond in (False, True):
        a, _ = constructed_spectrum(12, 1e2, rng)
        jsonschema.validate(json.loads(verify_sigmin(a, precond=precond).dumps()), cert_schema())


def test_perturbed_factor_detected():
    abar = augment(SparseMatrix.identity(2))
    F = ldlt(shifted(abar, 0.5))
    for acc in (False, True):
        assert residual_norm_bound(abar, 0.5, F, acc=acc) == 0.0
    L = F.L
    vals = L.values.copy()
    vals[0] = math.nextafter(vals[0], 2.0)
    bad = LdltFactors(F.perm, SparseMatrix(L.nrows, L.ncols, L.col_ptr, L.row_idx, vals), F.D)
    for acc in (False, True):
        assert residual_norm_bound(abar, 0.5, bad, acc=acc) > 0.0


@pytest.mark.parametrize("acc", [False, True])
def test_rho_bounds_dense_residual(rng, acc):
    for _ in range(5):
        a = random_sparse(40, 0.15, rng, diag_shift=1.0)
        abar = augment(a)
        theta = 0.25
        F = ldlt(shifted(abar, theta))
        rho = residual_norm_bound(abar, theta, F, acc=acc)
        m = shifted(abar, theta).to_dense()[np.ix_(F.perm, F.perm)]
        L = F.L.to_dense()
        # exact-ish residual in extended precision
        r = m.astype(np.longdouble) - L.astype(np.longdouble) @ F.D.to_dense().astype(np.longdouble) @ L.T.astype(np.longdouble)
        assert rho >= float(np.linalg.norm(r.astype(np.float64), 2)) * (1 - 1e-3)
        assert rho < 1e-10
