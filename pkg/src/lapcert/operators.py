"""Smoothing operator R defined by a g' + b g = f, g(0)=0, on [0,1].

Coefficients a, b are polynomials (exact symbolic derivatives); all
quadrature is composite trapezoid on the uniform grid x_i = i/N.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.integrate import cumulative_trapezoid

MAX_POLY_DEGREE = 16


class OperatorSpecError(ValueError):
    """Invalid coefficient pair (a not positive, degree too high, ...)."""


class CapacityError(ValueError):
    """Requested more than the computed/allowed capacity."""


@dataclass(frozen=True)
class CoefficientPair:
    """Polynomial coefficients (ascending degree) for a(x), b(x) on [0,1]."""

    a_coeffs: tuple
    b_coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "a_coeffs", tuple(float(c) for c in self.a_coeffs))
        object.__setattr__(self, "b_coeffs", tuple(float(c) for c in self.b_coeffs))
        if len(self.a_coeffs) - 1 > MAX_POLY_DEGREE or len(self.b_coeffs) - 1 > MAX_POLY_DEGREE:
            raise OperatorSpecError("polynomial degree > %d" % MAX_POLY_DEGREE)
        xs = np.linspace(0.0, 1.0, 2049)
        avals = self.a(xs)
        if not np.all(np.isfinite(avals)) or avals.min() <= 0.0:
            raise OperatorSpecError("a(x) must be strictly positive on [0,1]")

    # exact polynomial evaluations; derivatives are symbolic
    def a(self, x):
        return npoly.polyval(x, self.a_coeffs)

    def b(self, x):
        return npoly.polyval(x, self.b_coeffs)

    def a1(self, x):
        return npoly.polyval(x, npoly.polyder(self.a_coeffs))

    def a2(self, x):
        return npoly.polyval(x, npoly.polyder(self.a_coeffs, 2))

    def b1(self, x):
        return npoly.polyval(x, npoly.polyder(self.b_coeffs))

    @property
    def a0(self) -> float:
        """Sampled lower bound of a on [0,1]."""
        xs = np.linspace(0.0, 1.0, 2049)
        return float(self.a(xs).min())

    def to_dict(self) -> dict:
        return {"a": list(self.a_coeffs), "b": list(self.b_coeffs)}

    @classmethod
    def from_dict(cls, d: dict) -> "CoefficientPair":
        return cls(tuple(d["a"]), tuple(d["b"]))

    def content_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


VOLTERRA = CoefficientPair((1.0,), (0.0,))


def grid(N: int) -> np.ndarray:
    """Uniform grid x_i = i/N, i = 0..N."""
    return np.linspace(0.0, 1.0, N + 1)


def _check_grid(f: np.ndarray):
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size < 2:
        raise ValueError("function grid must be a 1-d array of length >= 2")
    if not np.all(np.isfinite(f)):
        raise ValueError("function grid contains non-finite values")
    return f


def cumulative_antiderivative(spec: CoefficientPair, N: int) -> np.ndarray:
    """C(x) = int_0^x b/a on the uniform grid, C(0) = 0."""
    if N < 64:
        raise ValueError("N >= 64 required")
    x = grid(N)
    return cumulative_trapezoid(spec.b(x) / spec.a(x), dx=1.0 / N, initial=0.0)


def apply_R(spec: CoefficientPair, f: np.ndarray) -> np.ndarray:
    """g(x) = e^{-C(x)} int_0^x e^{C} f / a; solves a g' + b g = f, g(0)=0."""
    f = _check_grid(f)
    N = f.size - 1
    x = grid(N)
    C = cumulative_antiderivative(spec, N)
    inner = cumulative_trapezoid(np.exp(C) * f / spec.a(x), dx=1.0 / N, initial=0.0)
    return np.exp(-C) * inner


def apply_RT(spec: CoefficientPair, h: np.ndarray) -> np.ndarray:
    """Adjoint: g(x) = (e^{C(x)}/a(x)) int_x^1 e^{-C} h; solves -(a g)' + b g = h, g(1)=0.

    Closed form via integrating factor on the backward ODE; validated by the
    adjointness test against apply_R.
    """
    h = _check_grid(h)
    N = h.size - 1
    x = grid(N)
    C = cumulative_antiderivative(spec, N)
    w = np.exp(-C) * h
    cum = cumulative_trapezoid(w, dx=1.0 / N, initial=0.0)
    tail = cum[-1] - cum
    return np.exp(C) / spec.a(x) * tail


def discretize_R(spec: CoefficientPair, N: int) -> np.ndarray:
    """Dense (N+1)x(N+1) matrix M with M f_grid = apply_R(f) exactly."""
    if N > 4096:
        raise CapacityError("dense discretization capped at N = 4096")
    x = grid(N)
    dx = 1.0 / N
    C = cumulative_antiderivative(spec, N)
    # trapezoid weights for the running integral 0..x_i, causal (lower triangular)
    W = np.tril(np.full((N + 1, N + 1), dx))
    idx = np.arange(N + 1)
    W[:, 0] = 0.5 * dx
    W[idx, idx] = 0.5 * dx
    W[0, :] = 0.0
    return np.exp(-C)[:, None] * W * (np.exp(C) / spec.a(x))[None, :]


def trapezoid_weights(N: int) -> np.ndarray:
    w = np.full(N + 1, 1.0 / N)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def l2_inner(f: np.ndarray, g: np.ndarray) -> float:
    """Trapezoid approximation of the L2[0,1] inner product."""
    f = np.asarray(f)
    return float(np.trapezoid(f * g, dx=1.0 / (f.size - 1)))


@dataclass(frozen=True)
class DesignMatrix:
    """n x p matrix with rows R_j, R_{jk} = sqrt(lambda_k) psi_k(j/n).

    `basis_x` / `basis_rows` carry the continuum fields r(x)_k =
    sqrt(lambda_k) psi_k(x) on the eigenfunction grid (plus derivative rows),
    used by the certification stage for sup-over-x quantities.
    """

    rows: np.ndarray
    n: int
    p: int
    basis_x: np.ndarray = field(repr=False)
    basis_rows: np.ndarray = field(repr=False)  # (p, len(basis_x))
    basis_drows: np.ndarray = field(repr=False)


def assemble_design(eig, n: int, p: int) -> DesignMatrix:
    """Sample the weighted eigenbasis at j/n, j = 1..n."""
    if p > eig.lambdas.size:
        raise CapacityError("p = %d exceeds %d computed eigenpairs" % (p, eig.lambdas.size))
    xj = np.arange(1, n + 1) / n
    rows = np.empty((n, p))
    root_lam = np.sqrt(eig.lambdas[:p])
    for k in range(p):
        rows[:, k] = root_lam[k] * np.interp(xj, eig.x, eig.psi[k])
    basis_rows = root_lam[:, None] * eig.psi[:p]
    basis_drows = root_lam[:, None] * eig.dpsi[:p]
    return DesignMatrix(rows=rows, n=n, p=p, basis_x=eig.x,
                        basis_rows=basis_rows, basis_drows=basis_drows)
