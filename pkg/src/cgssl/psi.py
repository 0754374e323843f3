"""Conditional maximization over (Psi, theta) with Omega held fixed.

``Psi`` is updated by cyclic coordinate ascent. Each coordinate is
soft-thresholded at its self-adaptive penalty ``lambda_star(psi_jk) /
(Omega^{-1})_kk``; below the hard threshold the zero solution is taken
whenever it scores at least as well. Because ``pen`` is convex in ``|x|`` the
soft-threshold step maximizes a minorizer of the coordinate objective, so
every accepted move is an ascent step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import linalg

from .errors import NumericalError
from .model import Dataset, SslConfig, _log_mixture, cholesky, inverse_pd
from .penalty import MixtureRates, lambda_star, threshold_bounds


@dataclass(frozen=True)
class PsiSolveOptions:
    inner_tol: float = 1e-3
    max_inner_iter: int = 10000
    max_theta_newton_iter: int = 100
    theta_tol: float = 1e-10

    def __post_init__(self):
        if not (self.inner_tol > 0 and self.theta_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_inner_iter < 1 or self.max_theta_newton_iter < 1:
            raise ValueError("iteration caps must be at least 1")


@dataclass
class PsiResult:
    Psi: np.ndarray
    iterations: int
    converged: bool
    R: np.ndarray


def compute_z(j, k, Psi, R, Omega_inv, X) -> float:
    """Coordinate statistic for ``psi_jk`` given the residual ``R = Y Omega - X Psi``."""
    vkk = Omega_inv[k, k]
    if vkk <= 0:
        raise ValueError("(Omega^{-1})_kk must be positive")
    n = X.shape[0]
    xr = X[:, j] @ R
    return float(n * Psi[j, k] + (Omega_inv[k] / vkk) @ xr)


def coordinate_update(z: float, n: int, lam_star: float, threshold: float) -> float:
    """``n^{-1} [|z| - lam_star]_+ sign(z)``, zeroed when ``|z| <= threshold``."""
    if abs(z) <= max(lam_star, threshold):
        return 0.0
    return math.copysign((abs(z) - lam_star) / n, z)


@njit(cache=True)
def _log_mix(ax, spike, slab, log_w_slab, log_w_spike):
    a = log_w_slab + math.log(slab) - slab * ax
    b = log_w_spike + math.log(spike) - spike * ax
    m = max(a, b)
    return m + math.log(math.exp(a - m) + math.exp(b - m))


@njit(cache=True)
def _psi_sweeps(Psi, R, G, X, C, V, thresholds, spike, slab, mix, tol, max_iter):
    n, p = X.shape
    q = Psi.shape[1]
    gap = spike - slab
    offset = math.log1p(-mix) + math.log(spike) - math.log(mix) - math.log(slab)
    lw_slab = math.log(mix)
    lw_spike = math.log1p(-mix)
    log_pi0 = _log_mix(0.0, spike, slab, lw_slab, lw_spike)
    old = np.empty_like(Psi)
    for it in range(1, max_iter + 1):
        old[:, :] = Psi
        for j in range(p):
            for k in range(q):
                vkk = V[k, k]
                psi = Psi[j, k]
                z = n * psi
                for kk in range(q):
                    z += V[k, kk] / vkk * G[j, kk]
                ps = 1.0 / (1.0 + math.exp(offset - gap * abs(psi)))
                lam = (slab * ps + spike * (1.0 - ps)) / vkk
                az = abs(z)
                new = 0.0
                if az > lam:
                    new = (az - lam) / n
                    if z < 0:
                        new = -new
                if new != 0.0 and az <= thresholds[k]:
                    # hard-threshold region: keep zero if it scores at least as well
                    h0 = -0.5 * vkk * n * (z / n) ** 2
                    dev = new - z / n
                    h1 = (-0.5 * vkk * n * dev * dev
                          + _log_mix(abs(new), spike, slab, lw_slab, lw_spike) - log_pi0)
                    if h0 >= h1:
                        new = 0.0
                if not math.isfinite(new):
                    return it, j, k, False
                delta = new - psi
                if delta != 0.0:
                    Psi[j, k] = new
                    for i in range(n):
                        R[i, k] -= delta * X[i, j]
                    for jj in range(p):
                        G[jj, k] -= delta * C[jj, j]
        worst = 0.0
        for j in range(p):
            for k in range(q):
                a, b = old[j, k], Psi[j, k]
                if a != 0.0:
                    worst = max(worst, abs(b - a) / abs(a))
                elif b != 0.0:
                    worst = math.inf
        if worst < tol:
            return it, -1, -1, True
    return max_iter, -1, -1, False


def update_psi(Psi_init, theta: float, Omega, data: Dataset, cfg: SslConfig,
               opts: PsiSolveOptions | None = None) -> PsiResult:
    """Coordinate ascent on ``Psi`` for fixed ``theta`` and ``Omega``.

    Sweeps run row-major (predictor outer, response inner). The returned ``R``
    is the incrementally maintained residual ``Y Omega - X Psi``.
    """
    opts = opts or PsiSolveOptions()
    X, Y = data.X, data.Y
    n = data.n
    Psi = np.array(Psi_init, dtype=float, copy=True)
    if Psi.shape != (data.p, data.q):
        raise ValueError(f"Psi_init has shape {Psi.shape}, expected {(data.p, data.q)}")
    if not np.all(np.isfinite(Psi)):
        raise NumericalError("Psi_init contains non-finite values")
    Omega = np.asarray(Omega, dtype=float)
    V = inverse_pd(Omega)
    rates = MixtureRates(cfg.lambda0, cfg.lambda1, theta)

    thresholds = np.empty(data.q)
    lam0 = lambda_star(0.0, rates)
    for k in range(data.q):
        bounds = threshold_bounds(V[k, k], n, rates)
        thresholds[k] = bounds.delta_upper if bounds.valid else lam0 / V[k, k]

    R = Y @ Omega - X @ Psi
    G = X.T @ R
    C = X.T @ X
    it, j, k, converged = _psi_sweeps(
        Psi, R, G, np.ascontiguousarray(X), C, V, thresholds,
        float(cfg.lambda0), float(cfg.lambda1), float(theta),
        float(opts.inner_tol), int(opts.max_inner_iter))
    if j >= 0:
        raise NumericalError(f"non-finite Psi update at sweep {it}, coordinate ({j}, {k})")
    return PsiResult(Psi, it, bool(converged), R)


def psi_objective(Psi, theta: float, Omega, data: Dataset, cfg: SslConfig) -> float:
    """Objective maximized by :func:`update_psi` (up to a Psi-free constant)."""
    R = data.Y @ Omega - data.X @ Psi
    chol = cholesky(Omega)
    half = linalg.solve_triangular(chol, R.T, lower=True)
    return float(-0.5 * np.sum(half * half)
                 + np.sum(_log_mixture(Psi, cfg.lambda0, cfg.lambda1, theta)))


# theta update

def _theta_parts(Psi, cfg: SslConfig):
    # slab share u of each entry at theta = 1/2, and the log normalizer log(a + b)
    ax = np.abs(np.asarray(Psi, dtype=float)).ravel()
    la = math.log(cfg.lambda1) - cfg.lambda1 * ax
    lb = math.log(cfg.lambda0) - cfg.lambda0 * ax
    lse = np.logaddexp(la, lb)
    return np.exp(la - lse), lse


def theta_objective(theta: float, Psi, cfg: SslConfig) -> float:
    """Log prior of ``(Psi, theta)``: mixture terms plus the Beta log density."""
    u, lse = _theta_parts(Psi, cfg)
    return _theta_value(theta, u, lse, cfg)


def _theta_value(theta, u, lse, cfg):
    if not (0.0 < theta < 1.0):
        return -math.inf
    m = theta * u + (1.0 - theta) * (1.0 - u)
    return float(np.sum(lse + np.log(m))
                 + (cfg.a_theta - 1.0) * math.log(theta)
                 + (cfg.b_theta - 1.0) * math.log1p(-theta))


def _theta_derivs(theta, u, cfg):
    m = theta * u + (1.0 - theta) * (1.0 - u)
    s = 2.0 * u - 1.0
    g = float(np.sum(s / m)) + (cfg.a_theta - 1.0) / theta - (cfg.b_theta - 1.0) / (1.0 - theta)
    h = (-float(np.sum((s / m) ** 2)) - (cfg.a_theta - 1.0) / theta ** 2
         - (cfg.b_theta - 1.0) / (1.0 - theta) ** 2)
    return g, h


_THETA_LO, _THETA_HI = 1e-8, 1.0 - 1e-8


def _golden_max(f, lo, hi, tol=1e-12, max_iter=200):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def update_theta(Psi, theta_init: float, cfg: SslConfig,
                 opts: PsiSolveOptions | None = None) -> float:
    """Maximize the ``(Psi, theta)`` log prior over ``theta`` by safeguarded Newton.

    A step leaving ``(1e-8, 1 - 1e-8)`` or lowering the objective is halved;
    after 50 halvings the search falls back to golden section.
    """
    opts = opts or PsiSolveOptions()
    if not (0.0 < theta_init < 1.0):
        raise ValueError("theta_init must lie in (0, 1)")
    u, lse = _theta_parts(Psi, cfg)
    f = lambda t: _theta_value(t, u, lse, cfg)
    theta = min(max(theta_init, _THETA_LO), _THETA_HI)
    best = f(theta)
    for _ in range(opts.max_theta_newton_iter):
        g, h = _theta_derivs(theta, u, cfg)
        if h < 0:
            step = -g / h
        else:
            step = math.inf
        accepted = False
        if math.isfinite(step):
            for _ in range(50):
                cand = theta + step
                if _THETA_LO < cand < _THETA_HI:
                    val = f(cand)
                    if val >= best:
                        accepted = True
                        break
                step /= 2.0
        if not accepted:
            cand = _golden_max(f, _THETA_LO, _THETA_HI)
            val = f(cand)
            if val < best:
                break
            step = cand - theta
        theta, best = cand, val
        if abs(step) < opts.theta_tol:
            break
    return theta
