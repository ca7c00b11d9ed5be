import math

import numpy as np
import pytest

from lapcert import concentration as conc
from lapcert.posterior import map_solve

from conftest import make_problem


def test_gaussian_tail_values():
    assert conc.gaussian_tail(4.0, 0.0) == 1.0
    assert conc.gaussian_tail(4.0, 3.0) == pytest.approx(math.exp(-4.5))
    with pytest.raises(ValueError):
        conc.gaussian_tail(4.0, -0.1)


def test_gaussian_tail_monte_carlo():
    # dim=1: P(|Z| > 1 + t) <= e^{-t^2/2}
    rng = np.random.default_rng(0)
    z = np.abs(rng.standard_normal(10 ** 6))
    for t in (1.0, 2.0, 3.0):
        frac = np.mean(z > 1.0 + t)
        assert frac <= conc.gaussian_tail(1.0, t)


def test_quadratic_form_deviation_bound():
    # P(g' B g - dim > 2 v sqrt(x) + 2 x) <= e^{-x} with v^2 = Tr(B^2), ||B||=1
    rng = np.random.default_rng(1)
    B = np.diag([1.0, 0.5, 0.25])
    dim, v = np.trace(B), math.sqrt(np.trace(B @ B))
    g = rng.standard_normal((10 ** 6, 3))
    q = np.sum(g * (g @ B), axis=1)
    for x in (1.0, 2.0, 4.0):
        frac = np.mean(q - dim > 2 * v * math.sqrt(x) + 2 * x)
        assert frac <= math.exp(-x)


def test_posterior_tail_bound_values():
    dim = 4.0
    r0 = 3.0 + 3.0 * math.sqrt(dim)
    assert conc.posterior_tail_bound(dim, r0) == pytest.approx(math.exp(-3.0) / 3.0)
    assert conc.posterior_tail_bound(dim, r0 - 0.5) == 1.0  # below critical radius
    rs = np.linspace(r0, r0 + 10, 20)
    vals = [conc.posterior_tail_bound(dim, r) for r in rs]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert all(0.0 <= v <= 1.0 for v in vals)


def test_wilson_interval_basic():
    lo, hi = conc.wilson_interval(0, 100)
    assert lo == 0.0 and 0.0 < hi < 0.05
    lo, hi = conc.wilson_interval(50, 100)
    assert lo < 0.5 < hi


def test_outside_mass_extremes(poisson_fit):
    prob, fit = poisson_fit
    at0 = conc.empirical_outside_mass(fit, prob, fit.DG2, r=0.0, n_samples=1000, seed=0)
    assert at0.gaussian_frac == 1.0
    assert at0.posterior_frac == pytest.approx(1.0)
    far = conc.empirical_outside_mass(fit, prob, fit.DG2, r=100.0, n_samples=1000, seed=0)
    assert far.gaussian_frac == 0.0
    assert far.posterior_frac == 0.0
    assert far.posterior_ci_high < 0.02


def test_gaussian_family_weights_unit(gaussian_fit):
    # exact Laplace fit: importance weights are constant, so the posterior
    # fraction equals the plain Gaussian fraction
    prob, fit = gaussian_fit
    rep = conc.empirical_outside_mass(fit, prob, fit.DG2, r=1.5, n_samples=2000, seed=3)
    assert rep.posterior_frac == pytest.approx(rep.gaussian_frac, abs=1e-10)
    assert rep.ess == pytest.approx(2000, rel=1e-6)


def test_bounds_dominate_empirical(poisson_fit):
    prob, fit = poisson_fit
    p = prob.design.p
    for r in np.linspace(math.sqrt(p), 3 + 3 * math.sqrt(p) + 2, 6):
        rep = conc.empirical_outside_mass(fit, prob, fit.DG2, r=float(r),
                                          n_samples=2000, seed=5)
        t = max(0.0, r - math.sqrt(rep.effdim))
        # 3 Wilson standard errors of slack on the binomial side
        se = math.sqrt(max(rep.gaussian_frac * (1 - rep.gaussian_frac), 1e-9) / 2000)
        assert rep.gaussian_frac - 3 * se <= conc.gaussian_tail(rep.effdim, t)
        assert rep.posterior_ci_low <= rep.posterior_bound


def test_min_samples_enforced(poisson_fit):
    prob, fit = poisson_fit
    with pytest.raises(ValueError):
        conc.empirical_outside_mass(fit, prob, fit.DG2, r=1.0, n_samples=10)
