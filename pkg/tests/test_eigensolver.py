import math
import os

import numpy as np
import pytest

from lapcert.eigensolver import (cached_solve, eig_diagnostics,
                                 liouville_transform, load_eigensystem,
                                 save_eigensystem, solve_eigs, svd_oracle)
from lapcert.operators import VOLTERRA, CoefficientPair, l2_inner

from conftest import CACHE, SPEC_CORPUS


def test_volterra_closed_form(volterra_eig):
    """a=1, b=0: lambda_k = ((k - 1/2) pi)^{-2}, psi_k = sqrt(2) sin((k - 1/2) pi x)."""
    eig = volterra_eig
    k = np.arange(1, eig.lambdas.size + 1)
    exact = ((k - 0.5) * np.pi) ** -2.0
    assert np.max(np.abs(eig.lambdas - exact) / exact) < 1e-6
    for kk in (1, 5, 20, 50):
        ref = np.sqrt(2.0) * np.sin((kk - 0.5) * np.pi * eig.x)
        err2 = min(l2_inner(eig.psi[kk - 1] - ref, eig.psi[kk - 1] - ref),
                   l2_inner(eig.psi[kk - 1] + ref, eig.psi[kk - 1] + ref))
        assert math.sqrt(max(err2, 0.0)) < 1e-4


def test_orthonormality(corpus_eigs):
    for eig in corpus_eigs:
        for i in (0, 3, 10):
            for j in (0, 3, 10):
                want = 1.0 if i == j else 0.0
                assert l2_inner(eig.psi[i], eig.psi[j]) == pytest.approx(want, abs=2e-4)


def test_eigenvalues_decreasing(corpus_eigs):
    for eig in corpus_eigs:
        assert np.all(np.diff(eig.lambdas) < 0)
        assert eig.lambdas[-1] > 0


def test_asymptote_rate():
    """k^2 lambda_k approaches pi^{-2} (int 1/a)^2 from above as k grows."""
    spec = CoefficientPair((1.0, 0.5), (0.1,))
    eig = cached_solve(spec, 4096, 50, CACHE)
    k = np.arange(1, 51)
    limit = (2 * math.log(1.5)) ** 2 / math.pi ** 2
    ratio = k ** 2 * eig.lambdas / limit
    # the finite-index correction is (k/(k-1/2))^2 ~ 1 + 1/k
    corrected = ratio / (k / (k - 0.5)) ** 2
    assert np.max(np.abs(corrected[39:] - 1.0)) < 5e-3
    assert np.all(np.diff(np.abs(ratio - 1.0)[9:]) < 0)


def test_cross_method_agreement():
    for spec in SPEC_CORPUS:
        sh = cached_solve(spec, 2048, 20, CACHE)
        sv = svd_oracle(spec, 2048, 20)
        rel = np.abs(sh.lambdas - sv.lambdas) / sh.lambdas
        assert np.max(rel) < 1e-3
        for k in range(20):
            align = abs(l2_inner(sh.psi[k], sv.psi[k]))
            assert align > 0.999


def test_boundary_conditions(corpus_eigs):
    for eig in corpus_eigs:
        assert np.all(eig.psi[:, 0] == 0.0)


def test_robin_condition_at_one(corpus_eigs):
    """a(1) psi'(1) + b(1) psi(1) = 0 for each eigenfunction."""
    for spec, eig in zip(SPEC_CORPUS, corpus_eigs):
        a1, b1 = float(spec.a(1.0)), float(spec.b(1.0))
        for k in (0, 4, 14):
            resid = a1 * eig.dpsi[k, -1] + b1 * eig.psi[k, -1]
            scale = max(abs(eig.dpsi[k, -1]), abs(eig.psi[k, -1]), 1.0)
            assert abs(resid) / scale < 5e-3


def test_liouville_transform_fields():
    spec = CoefficientPair((1.0, 0.5), (0.1,))
    N = 2048
    form = liouville_transform(spec, N)
    assert form.T == pytest.approx(2 * math.log(1.5), rel=1e-8)
    # t(x) = 2 log(1 + x/2); x_of_t inverts it on the uniform t grid
    xs = np.linspace(0, 1, N + 1)
    assert np.max(np.abs(form.t_of_x - 2 * np.log1p(xs / 2))) < 1e-8
    ts = np.linspace(0, form.T, N + 1)
    assert np.max(np.abs(form.x_of_t - 2 * (np.exp(ts / 2) - 1))) < 1e-7
    assert form.c1 == 1.0
    assert form.c2 == pytest.approx(float(spec.b(1.0) - 0.5 * spec.a1(1.0)))


def test_sturm_liouville_residual(volterra_eig_small):
    """-(a^2 h')' + (b^2 - (ab)') h = lambda^{-1} h away from the endpoints."""
    spec = CoefficientPair((1.0, 0.0, 0.25), (0.2, 0.1))
    eig = cached_solve(spec, 4096, 20, CACHE)
    x = eig.x
    a2 = spec.a(x) ** 2
    q = spec.b(x) ** 2 - (spec.a1(x) * spec.b(x) + spec.a(x) * spec.b1(x))
    for k in (2, 9):
        h = eig.psi[k]
        # one numerical derivative only: the stored dpsi is analytic
        flux = a2 * eig.dpsi[k]
        lhs = -np.gradient(flux, x) + q * h
        rhs = h / eig.lambdas[k]
        core = slice(200, -200)
        assert np.max(np.abs(lhs[core] - rhs[core])) / np.max(np.abs(rhs)) < 5e-3


def test_diagnostics_bounds(volterra_eig):
    d = eig_diagnostics(volterra_eig)
    assert d["vk_inf_violations"] == 0
    assert d["dvk_inf_violations"] == 0
    assert d["vk_l2_c_estimate"] > 0.1
    assert np.all(d["psi_sup"] < 3.0)


def test_cache_roundtrip(tmp_path):
    spec = CoefficientPair((1.0, 0.5), (0.1,))
    eig = cached_solve(spec, 1024, 5, None)
    save_eigensystem(eig, spec, str(tmp_path))
    back = load_eigensystem(spec, 1024, 5, str(tmp_path))
    assert back is not None
    assert np.array_equal(back.lambdas, eig.lambdas)
    assert np.allclose(back.psi, eig.psi)
    assert back.T == pytest.approx(eig.T)
    # key depends on the coefficients
    assert load_eigensystem(VOLTERRA, 1024, 5, str(tmp_path)) is None
