import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lapcert.operators import (VOLTERRA, CapacityError, CoefficientPair,
                               OperatorSpecError, apply_R, apply_RT,
                               assemble_design, cumulative_antiderivative,
                               discretize_R, grid, l2_inner,
                               trapezoid_weights)

coeff_st = st.lists(st.floats(-0.4, 0.4), min_size=0, max_size=3)


def _spec(extra_a, b):
    # a = 1 + perturbation kept positive by the coefficient range
    return CoefficientPair((1.0, *extra_a), tuple(b) or (0.0,))


def test_volterra_is_running_integral():
    N = 1024
    x = grid(N)
    f = np.cos(3 * x)
    g = apply_R(VOLTERRA, f)
    assert np.max(np.abs(g - np.sin(3 * x) / 3)) < 1e-5


def test_apply_R_solves_ode():
    spec = CoefficientPair((1.0, 0.5), (0.1,))
    N = 2048
    x = grid(N)
    f = np.sin(2 * x) + 1.0
    g = apply_R(spec, f)
    resid = spec.a(x[1:-1]) * np.gradient(g, x)[1:-1] + spec.b(x[1:-1]) * g[1:-1] - f[1:-1]
    assert g[0] == 0.0
    assert np.max(np.abs(resid)) < 1e-3


def test_apply_RT_solves_backward_ode():
    spec = CoefficientPair((1.0, 0.5), (0.1,))
    N = 2048
    x = grid(N)
    h = np.cos(x) + 0.5
    g = apply_RT(spec, h)
    ag = spec.a(x) * g
    resid = -np.gradient(ag, x)[1:-1] + spec.b(x[1:-1]) * g[1:-1] - h[1:-1]
    assert abs(g[-1]) < 1e-12
    assert np.max(np.abs(resid)) < 1e-3


@settings(max_examples=40, deadline=None)
@given(coeff_st, coeff_st, st.integers(0, 3), st.integers(0, 3))
def test_adjointness(extra_a, b, i, j):
    """<R f, h> = <f, R^T h> in L2, for polynomial coefficient pairs."""
    spec = _spec(extra_a, b)
    N = 512
    x = grid(N)
    f = np.sin((i + 1) * np.pi * x)
    h = np.cos(j * np.pi * x)
    lhs = l2_inner(apply_R(spec, f), h)
    rhs = l2_inner(f, apply_RT(spec, h))
    assert lhs == pytest.approx(rhs, abs=1e-4, rel=1e-3)


@settings(max_examples=20, deadline=None)
@given(coeff_st, coeff_st)
def test_discretize_matches_apply(extra_a, b):
    spec = _spec(extra_a, b)
    N = 256
    x = grid(N)
    f = np.exp(-x) * np.sin(4 * x)
    M = discretize_R(spec, N)
    assert np.max(np.abs(M @ f - apply_R(spec, f))) < 1e-12


def test_antiderivative_linear_case():
    # b/a = 0.1/(1 + x/2): C(x) = 0.2 log(1 + x/2)
    spec = CoefficientPair((1.0, 0.5), (0.1,))
    N = 2048
    x = grid(N)
    C = cumulative_antiderivative(spec, N)
    assert np.max(np.abs(C - 0.2 * np.log1p(0.5 * x))) < 1e-8


def test_trapezoid_weights_sum_to_one():
    w = trapezoid_weights(100)
    assert w.sum() == pytest.approx(1.0)
    assert l2_inner(np.ones(101), np.ones(101)) == pytest.approx(1.0)


def test_nonpositive_a_rejected():
    with pytest.raises(OperatorSpecError):
        CoefficientPair((1.0, -2.0), (0.0,))
    with pytest.raises(OperatorSpecError):
        CoefficientPair((0.0,), (0.0,))


def test_degree_cap():
    with pytest.raises(OperatorSpecError):
        CoefficientPair((1.0,) + (0.0,) * 17, (0.0,))


def test_dense_capacity_cap():
    with pytest.raises(CapacityError):
        discretize_R(VOLTERRA, 8192)


def test_content_hash_roundtrip():
    spec = CoefficientPair((1.0, 0.5), (0.1,))
    again = CoefficientPair.from_dict(spec.to_dict())
    assert spec.content_hash() == again.content_hash()
    assert spec.content_hash() != VOLTERRA.content_hash()


def test_design_shapes_and_capacity(volterra_eig_small):
    des = assemble_design(volterra_eig_small, n=100, p=5)
    assert des.rows.shape == (100, 5)
    # row j samples the weighted basis at x = j/n
    k = 2
    expected = np.sqrt(volterra_eig_small.lambdas[k]) * np.interp(
        0.5, volterra_eig_small.x, volterra_eig_small.psi[k])
    assert des.rows[49, k] == pytest.approx(expected)
    with pytest.raises(CapacityError):
        assemble_design(volterra_eig_small, n=100, p=100)
