import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from lapcert.model import (ModelError, TruthSpec, exp_family, generate,
                           sample_poisson, save_dataset, signal_sup_norm,
                           _bernoulli_h3_envelope, _substream)

from conftest import make_problem


def test_poisson_sampler_matches_pmf():
    rng = _substream(123, 0)
    lam = 4.5
    draws = np.array([sample_poisson(lam, rng) for _ in range(20000)])
    # chi-square against the exact pmf over a truncated support
    kmax = 15
    obs = np.bincount(np.minimum(draws, kmax), minlength=kmax + 1)
    pk = stats.poisson.pmf(np.arange(kmax + 1), lam)
    pk[kmax] = 1.0 - pk[:kmax].sum()
    chi2 = np.sum((obs - 20000 * pk) ** 2 / (20000 * pk))
    assert chi2 < stats.chi2.ppf(0.999, kmax)


def test_poisson_sampler_large_rate_moments():
    rng = _substream(7, 3)
    lam = 250.0
    draws = np.array([sample_poisson(lam, rng) for _ in range(20000)])
    assert draws.mean() == pytest.approx(lam, rel=0.01)
    assert draws.var() == pytest.approx(lam, rel=0.05)


def test_poisson_rate_overflow_rejected():
    with pytest.raises(ModelError):
        sample_poisson(1e16, _substream(0, 0))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 200.0), st.integers(0, 2 ** 32 - 1))
def test_poisson_sampler_nonnegative_int(lam, seed):
    v = sample_poisson(lam, _substream(seed, 0))
    assert isinstance(v, int) and v >= 0


def test_family_derivatives_finite_difference():
    eps = 1e-5
    for kind in ("poisson", "gaussian", "bernoulli"):
        fam = exp_family(kind)
        for s in (-1.5, 0.0, 0.7):
            assert fam.h1(s) == pytest.approx(
                (fam.h(s + eps) - fam.h(s - eps)) / (2 * eps), rel=1e-4, abs=1e-6)
            assert fam.h2(s) == pytest.approx(
                (fam.h1(s + eps) - fam.h1(s - eps)) / (2 * eps), rel=1e-4, abs=1e-6)
            assert fam.h3(s) == pytest.approx(
                (fam.h2(s + eps) - fam.h2(s - eps)) / (2 * eps), rel=1e-3, abs=1e-6)


def test_d3_envelopes():
    # poisson: sup |h'''| over |t| <= K is e^K; gaussian: 0
    assert exp_family("poisson").d3_envelope(2.0) == pytest.approx(math.e ** 2)
    assert exp_family("gaussian").d3_envelope(5.0) == 0.0
    # bernoulli: global max 1/(6 sqrt 3) reached past the critical |s|
    env = exp_family("bernoulli").d3_envelope
    assert env(10.0) == pytest.approx(1.0 / (6 * math.sqrt(3.0)))
    assert env(0.05) < env(10.0)
    # envelope dominates |h'''| on a grid
    fam = exp_family("bernoulli")
    for K in (0.3, 1.0, 4.0):
        ss = np.linspace(-K, K, 201)
        assert np.max(np.abs(fam.h3(ss))) <= _bernoulli_h3_envelope(K) + 1e-12


def test_truth_theta():
    t = TruthSpec(p_star=4, amplitude=0.5, decay=2.0).theta()
    assert np.allclose(t, [0.5, -0.125, 0.5 / 9, -0.03125])
    e = TruthSpec(p_star=2, explicit=(0.3, -0.1)).theta()
    assert np.allclose(e, [0.3, -0.1])
    with pytest.raises(ModelError):
        TruthSpec(p_star=3, explicit=(1.0,)).theta()


def test_generate_deterministic(volterra_eig_small):
    fam = exp_family("poisson")
    tr = TruthSpec(p_star=6)
    d1 = generate(volterra_eig_small, fam, tr, n=50, seed=9)
    d2 = generate(volterra_eig_small, fam, tr, n=50, seed=9)
    d3 = generate(volterra_eig_small, fam, tr, n=50, seed=10)
    assert np.array_equal(d1.y, d2.y)
    assert not np.array_equal(d1.y, d3.y)
    # substream for index j depends only on (seed, j), not on draw order
    rng_direct = _substream(9, 10)
    lam = math.exp(d1.s_true[10])
    assert sample_poisson(lam, rng_direct) == d1.y[10]


def test_gaussian_generate_moments(volterra_eig_small):
    fam = exp_family("gaussian")
    ds = generate(volterra_eig_small, fam, TruthSpec(p_star=6), n=4000, seed=3)
    resid = ds.y - ds.s_true
    assert abs(resid.mean()) < 0.06
    assert resid.std() == pytest.approx(1.0, abs=0.05)


def test_signal_sup_norm(volterra_eig_small):
    theta = TruthSpec(p_star=6).theta()
    sup = signal_sup_norm(volterra_eig_small, theta)
    field = sum(theta[k] * np.sqrt(volterra_eig_small.lambdas[k]) * volterra_eig_small.psi[k]
                for k in range(6))
    assert sup == pytest.approx(np.max(np.abs(field)))


def test_save_dataset_roundtrip(tmp_path, volterra_eig_small):
    fam = exp_family("poisson")
    ds = generate(volterra_eig_small, fam, TruthSpec(p_star=4), n=20, seed=1)
    path = str(tmp_path / "ds.csv")
    save_dataset(ds, path, TruthSpec(p_star=4))
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(rows[:, 2], ds.y)
    assert np.allclose(rows[:, 1], ds.s_true)
