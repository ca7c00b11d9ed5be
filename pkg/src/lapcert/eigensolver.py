"""Eigenpairs of R R^T via the equivalent Sturm-Liouville problem.

The composite operator inverts -(a^2 h')' + (b^2 - (ab)') h = mu h with
h(0) = 0 and a(1) h'(1) + b(1) h(1) = 0.  A Liouville change of variables
t(x) = int_0^x 1/a reduces this to -u'' + Q u = mu u on [0, T], which we
solve by shooting (vectorized RK4) with oscillation-count verification, so
no mode can be silently skipped.  A weighted SVD of the dense discretization
serves as an independent cross-check.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .operators import (CoefficientPair, discretize_R, grid, trapezoid_weights)


class EigenSolverError(RuntimeError):
    pass


class BracketError(EigenSolverError):
    """Scan window failed to bracket an eigenvalue."""


@dataclass(frozen=True)
class LiouvilleForm:
    T: float
    t_of_x: np.ndarray   # on the uniform x grid
    x_of_t: np.ndarray   # on the uniform t grid [0, T]
    Q: np.ndarray        # on the uniform t grid
    c1: float
    c2: float
    N: int

    @property
    def Q_sup(self) -> float:
        return float(np.abs(self.Q).max())


def _q_potential(spec: CoefficientPair, x: np.ndarray) -> np.ndarray:
    # Q = b^2 - (ab)' + (a')^2/4 + a a''/2, evaluated with exact poly derivatives
    a, b = spec.a(x), spec.b(x)
    a1, a2, b1 = spec.a1(x), spec.a2(x), spec.b1(x)
    return b * b - (a1 * b + a * b1) + 0.25 * a1 * a1 + 0.5 * a * a2


def liouville_transform(spec: CoefficientPair, N: int) -> LiouvilleForm:
    x = grid(N)
    t_of_x = cumulative_trapezoid(1.0 / spec.a(x), dx=1.0 / N, initial=0.0)
    T = float(t_of_x[-1])
    t = np.linspace(0.0, T, N + 1)
    x_of_t = np.interp(t, t_of_x, x)
    Q = _q_potential(spec, x_of_t)
    # right boundary of u from a(1) psi'(1) + b(1) psi(1) = 0 with psi = a^{-1/2} u(t(x))
    c1 = 1.0
    c2 = float(spec.b(1.0) - 0.5 * spec.a1(1.0))
    return LiouvilleForm(T=T, t_of_x=t_of_x, x_of_t=x_of_t, Q=Q, c1=c1, c2=c2, N=N)


@dataclass(frozen=True)
class EigenSystem:
    lambdas: np.ndarray          # strictly decreasing, positive
    x: np.ndarray                # uniform grid on [0,1]
    psi: np.ndarray              # (K, N+1), L2[0,1]-normalized, psi_k(0)=0
    dpsi: np.ndarray             # analytic derivative via the chain rule
    sup_norms: np.ndarray
    deriv_sup_norms: np.ndarray
    vk_inf: np.ndarray           # ||v_k||_inf with v_k = u_k / u_k'(0)
    dvk_inf: np.ndarray
    vk_l2: np.ndarray
    T: float = 1.0
    Q_sup: float = 0.0
    method: str = "shooting"

    def __post_init__(self):
        lam = self.lambdas
        if np.any(lam <= 0) or np.any(np.diff(lam) >= 0):
            raise EigenSolverError("eigenvalues must be positive and strictly decreasing")


def _rk4_shoot(Qh: np.ndarray, T: float, mu: np.ndarray, keep_path: bool = False):
    """Integrate u'' = (Q - mu) u, u(0)=0, u'(0)=1 on the uniform t grid.

    Qh holds Q on the half-step grid (2N+1 points).  Vectorized over the mu
    axis.  Returns (u_T, up_T, interior zero counts[, path]).
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    N = (Qh.size - 1) // 2
    h = T / N
    u = np.zeros_like(mu)
    up = np.ones_like(mu)
    zeros = np.zeros(mu.shape, dtype=int)
    prev_sign = np.zeros_like(mu)
    path = np.empty((N + 1,) + mu.shape) if keep_path else None
    dpath = np.empty((N + 1,) + mu.shape) if keep_path else None
    if keep_path:
        path[0], dpath[0] = u, up
    for i in range(N):
        w0 = Qh[2 * i] - mu
        wm = Qh[2 * i + 1] - mu
        w1 = Qh[2 * i + 2] - mu
        k1u, k1v = up, w0 * u
        k2u = up + 0.5 * h * k1v
        k2v = wm * (u + 0.5 * h * k1u)
        k3u = up + 0.5 * h * k2v
        k3v = wm * (u + 0.5 * h * k2u)
        k4u = up + h * k3v
        k4v = w1 * (u + h * k3u)
        u = u + (h / 6.0) * (k1u + 2 * k2u + 2 * k3u + k4u)
        up = up + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        if keep_path:
            path[i + 1], dpath[i + 1] = u, up
        s = np.sign(u)
        if i > 0:
            zeros += (s * prev_sign < 0) & (s != 0)
        prev_sign = np.where(s != 0, s, prev_sign)
    if keep_path:
        return u, up, zeros, path, dpath
    return u, up, zeros


def _half_step_Q(spec: CoefficientPair, form: LiouvilleForm) -> np.ndarray:
    N = form.N
    t = np.linspace(0.0, form.T, 2 * N + 1)
    xh = np.interp(t, form.t_of_x, grid(N))
    return _q_potential(spec, xh)


def solve_eigs(form: LiouvilleForm, spec: CoefficientPair, K: int, N: int | None = None,
               rel_tol: float = 1e-10) -> EigenSystem:
    """First K eigenpairs by boundary shooting, bracketed by a mu scan."""
    if K < 1:
        raise ValueError("K >= 1")
    if N is None:
        N = form.N
    if N < 1024:
        raise ValueError("N >= 1024 required for eigen work")
    if N != form.N:
        form = liouville_transform(spec, N)
    Qh = _half_step_Q(spec, form)
    T, c1, c2 = form.T, form.c1, form.c2

    def boundary(mu, keep_path=False):
        out = _rk4_shoot(Qh, T, mu, keep_path=keep_path)
        B = c1 * out[1] + c2 * out[0]
        return (B,) + out[2:] if not keep_path else (B,) + out[2:]

    unit = (np.pi / T) ** 2
    mu_hi = ((K + 2.0) ** 2) * unit + max(0.0, float(form.Q.max()))
    # geometric seed near zero, then linear at quarter-spacing of the asymptote
    scan = np.concatenate([
        unit * np.geomspace(1e-6, 0.25, 24),
        np.arange(0.25 * unit, mu_hi, 0.5 * unit),
    ])
    B, _ = boundary(scan)
    sgn = np.sign(B)
    flips = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
    if flips.size < K:
        raise BracketError("found %d brackets, need %d (index %d missing)"
                           % (flips.size, K, flips.size + 1))
    lo = scan[flips[:K]].copy()
    hi = scan[flips[:K] + 1].copy()
    Blo = B[flips[:K]].copy()
    # vectorized bisection across all K brackets
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        Bm, _ = boundary(mid)
        take_lo = Blo * Bm <= 0
        hi = np.where(take_lo, mid, hi)
        lo = np.where(take_lo, lo, mid)
        Blo = np.where(take_lo, Blo, Bm)
        if np.all((hi - lo) <= rel_tol * hi):
            break
    mu = 0.5 * (lo + hi)

    _, _, zeros, upath, dupath = _rk4_shoot(Qh, T, mu, keep_path=True)
    if not np.array_equal(zeros, np.arange(K)):
        raise EigenSolverError("oscillation counts %s inconsistent with indices 1..%d"
                               % (zeros.tolist(), K))

    # v_k = u_k / u_k'(0) is the raw trajectory (u'(0) = 1 by construction)
    tgrid = np.linspace(0.0, T, N + 1)
    vk_inf = np.abs(upath).max(axis=0)
    dvk_inf = np.abs(dupath).max(axis=0)
    vk_l2 = np.sqrt(np.trapezoid(upath ** 2, tgrid, axis=0))

    # back-transform psi_k(x) = u_k(t(x)) a(x)^{-1/2}; chain rule for psi'
    x = grid(N)
    a = spec.a(x)
    a1 = spec.a1(x)
    psi = np.empty((K, N + 1))
    dpsi = np.empty((K, N + 1))
    for k in range(K):
        uk = np.interp(form.t_of_x, tgrid, upath[:, k])
        duk = np.interp(form.t_of_x, tgrid, dupath[:, k])
        psi[k] = uk / np.sqrt(a)
        dpsi[k] = (duk - 0.5 * a1 * uk) * a ** -1.5
        nrm = np.sqrt(np.trapezoid(psi[k] ** 2, dx=1.0 / N))
        psi[k] /= nrm
        dpsi[k] /= nrm
    psi[:, 0] = 0.0

    return EigenSystem(
        lambdas=1.0 / mu, x=x, psi=psi, dpsi=dpsi,
        sup_norms=np.abs(psi).max(axis=1),
        deriv_sup_norms=np.abs(dpsi).max(axis=1),
        vk_inf=vk_inf, dvk_inf=dvk_inf, vk_l2=vk_l2,
        T=T, Q_sup=form.Q_sup, method="shooting",
    )


def svd_oracle(spec: CoefficientPair, N: int, K: int) -> EigenSystem:
    """Independent eigenpairs from a weighted SVD of the dense discretization."""
    M = discretize_R(spec, N)
    w = trapezoid_weights(N)
    rw = np.sqrt(w)
    B = rw[:, None] * M / rw[None, :]
    U, s, _ = np.linalg.svd(B)
    lam = s[:K] ** 2
    x = grid(N)
    psi = np.empty((K, N + 1))
    for k in range(K):
        v = U[:, k] / rw
        # sign convention: increasing at 0, matching u'(0) > 0
        if v[: max(4, N // 64)].sum() < 0:
            v = -v
        psi[k] = v / np.sqrt(np.trapezoid(v ** 2, dx=1.0 / N))
    dpsi = np.gradient(psi, 1.0 / N, axis=1)
    return EigenSystem(
        lambdas=lam, x=x, psi=psi, dpsi=dpsi,
        sup_norms=np.abs(psi).max(axis=1),
        deriv_sup_norms=np.abs(dpsi).max(axis=1),
        vk_inf=np.full(K, np.nan), dvk_inf=np.full(K, np.nan),
        vk_l2=np.full(K, np.nan), method="svd",
    )


def eig_diagnostics(eig: EigenSystem) -> dict:
    """Report the v_k and psi_k regularity quantities, with bound flags.

    Flags are evaluated for indices past k*, the first k with
    rho_k = lambda_k^{-1/2} > 2 T ||Q||_inf (the asymptotic regime).
    """
    K = eig.lambdas.size
    ks = np.arange(1, K + 1)
    rho = eig.lambdas ** -0.5
    active = rho > 2.0 * eig.T * eig.Q_sup
    root_lam = np.sqrt(eig.lambdas)
    with np.errstate(invalid="ignore", divide="ignore"):
        c_est = np.nanmin((eig.vk_l2 / root_lam)[active]) if active.any() else np.nan
    report = {
        "k": ks,
        "psi_sup": eig.sup_norms,
        "dpsi_sup_over_k": eig.deriv_sup_norms / ks,
        "vk_inf": eig.vk_inf,
        "dvk_inf": eig.dvk_inf,
        "vk_l2": eig.vk_l2,
        "active": active,
        "vk_inf_violations": int(np.sum(active & (eig.vk_inf > 2.0 * root_lam))),
        "dvk_inf_violations": int(np.sum(active & (eig.dvk_inf > 2.0))),
        "vk_l2_c_estimate": float(c_est),
    }
    return report


# --- cache: lambdas.csv + psi.csv keyed by (a, b, N, K) hash ---

def _cache_key(spec: CoefficientPair, N: int, K: int) -> str:
    payload = {"spec": spec.to_dict(), "N": N, "K": K}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def save_eigensystem(eig: EigenSystem, spec: CoefficientPair, cache_dir: str) -> str:
    key = _cache_key(spec, eig.x.size - 1, eig.lambdas.size)
    base = os.path.join(cache_dir, "eig_" + key)
    os.makedirs(cache_dir, exist_ok=True)
    with open(base + "_lambdas.csv", "w", newline="") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["k", "lambda", "sup_norm", "deriv_sup_norm",
                      "vk_inf", "dvk_inf", "vk_l2"])
        for k in range(eig.lambdas.size):
            wtr.writerow([k + 1, repr(float(eig.lambdas[k])), repr(float(eig.sup_norms[k])),
                          repr(float(eig.deriv_sup_norms[k])), repr(float(eig.vk_inf[k])),
                          repr(float(eig.dvk_inf[k])), repr(float(eig.vk_l2[k]))])
    np.savetxt(base + "_psi.csv",
               np.column_stack([eig.x, eig.psi.T, eig.dpsi.T]), delimiter=",")
    with open(base + "_meta.json", "w") as fh:
        json.dump({"spec": spec.to_dict(), "N": eig.x.size - 1,
                   "K": int(eig.lambdas.size), "T": eig.T, "Q_sup": eig.Q_sup,
                   "method": eig.method}, fh, indent=1)
    return base


def load_eigensystem(spec: CoefficientPair, N: int, K: int, cache_dir: str) -> EigenSystem | None:
    base = os.path.join(cache_dir, "eig_" + _cache_key(spec, N, K))
    if not os.path.exists(base + "_meta.json"):
        return None
    with open(base + "_meta.json") as fh:
        meta = json.load(fh)
    tab = np.loadtxt(base + "_lambdas.csv", delimiter=",", skiprows=1)
    tab = np.atleast_2d(tab)
    dat = np.loadtxt(base + "_psi.csv", delimiter=",")
    x = dat[:, 0]
    psi = dat[:, 1:K + 1].T
    dpsi = dat[:, K + 1:2 * K + 1].T
    return EigenSystem(
        lambdas=tab[:, 1], x=x, psi=psi, dpsi=dpsi,
        sup_norms=tab[:, 2], deriv_sup_norms=tab[:, 3],
        vk_inf=tab[:, 4], dvk_inf=tab[:, 5], vk_l2=tab[:, 6],
        T=meta["T"], Q_sup=meta["Q_sup"], method=meta["method"],
    )


def cached_solve(spec: CoefficientPair, N: int, K: int, cache_dir: str | None = None) -> EigenSystem:
    if cache_dir is not None:
        eig = load_eigensystem(spec, N, K, cache_dir)
        if eig is not None:
            return eig
    form = liouville_transform(spec, N)
    eig = solve_eigs(form, spec, K, N)
    if cache_dir is not None:
        save_eigensystem(eig, spec, cache_dir)
    return eig
