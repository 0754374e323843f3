"""Second-order solver for the chain graphical LASSO problem

    min_{Omega > 0}  -log|Omega| + tr(S Omega) + tr(M Omega^{-1}) + sum_{k,k'} Xi_kk' |omega_kk'|

The penalty runs over ordered pairs, so an off-diagonal pair is charged twice
and a diagonal entry once. Each outer iteration builds a quadratic model of the
smooth part, minimizes model + penalty over the free coordinates by coordinate
descent to get a Newton direction ``D``, then takes an Armijo step that keeps
the iterate positive definite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import linalg

from .errors import LineSearchError, NotPositiveDefiniteError, NumericalError
from .model import cholesky, inverse_pd, logdet_pd

_PSD_FLOOR = -1e-10


def _symmetric(a, name):
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0))):
        raise ValueError(f"{name} must be symmetric")
    return (a + a.T) / 2


@dataclass(frozen=True)
class CglassoProblem:
    S: np.ndarray
    M: np.ndarray
    Xi: np.ndarray
    Omega_init: np.ndarray | None = None

    def __post_init__(self):
        S = _symmetric(self.S, "S")
        M = _symmetric(self.M, "M")
        Xi = _symmetric(self.Xi, "Xi")
        q = S.shape[0]
        if M.shape != (q, q) or Xi.shape != (q, q):
            raise ValueError("S, M and Xi must share one shape")
        for name, mat in (("S", S), ("M", M)):
            if np.linalg.eigvalsh(mat)[0] < _PSD_FLOOR * max(1.0, np.abs(mat).max()):
                raise ValueError(f"{name} must be positive semi-definite")
        if np.any(Xi < 0):
            raise ValueError("Xi must be nonnegative")
        init = np.eye(q) if self.Omega_init is None else _symmetric(self.Omega_init, "Omega_init")
        cholesky(init)
        for name, val in (("S", S), ("M", M), ("Xi", Xi), ("Omega_init", init)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def q(self) -> int:
        return self.S.shape[0]


@dataclass(frozen=True)
class CgquicOptions:
    sigma: float = 0.25
    beta: float = 0.5
    outer_tol: float = 1e-6
    max_outer_iter: int = 200
    max_inner_sweeps: int = 20
    inner_tol: float = 1e-4

    def __post_init__(self):
        if not (0 < self.sigma < 0.5):
            raise ValueError("sigma must lie in (0, 0.5)")
        if not (0 < self.beta < 1):
            raise ValueError("beta must lie in (0, 1)")
        if self.outer_tol <= 0 or self.inner_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_outer_iter < 1 or self.max_inner_sweeps < 1:
            raise ValueError("iteration caps must be at least 1")


@dataclass
class CgquicState:
    """Iterate plus the caches used while building a Newton direction.

    ``W = Omega^{-1}``, ``U = D W``, ``Q = M W`` and ``WMW = W M W``.
    """

    Omega: np.ndarray
    W: np.ndarray
    D: np.ndarray
    U: np.ndarray
    Q: np.ndarray
    WMW: np.ndarray
    objective: float
    chol: np.ndarray = field(repr=False, default=None)

    @classmethod
    def at(cls, Omega, prob: CglassoProblem, chol=None) -> "CgquicState":
        Omega = np.array(Omega, dtype=float)
        if chol is None:
            chol = cholesky(Omega)
        W = inverse_pd(Omega, chol)
        Q = prob.M @ W
        WMW = W @ Q
        WMW = (WMW + WMW.T) / 2
        q = Omega.shape[0]
        obj = _objective_from_chol(Omega, chol, W, prob)
        return cls(Omega, W, np.zeros((q, q)), np.zeros((q, q)), Q, WMW, obj, chol)


@dataclass
class CgquicResult:
    Omega: np.ndarray
    trace: list
    iterations: int
    converged: bool
    step_sizes: list


def l1_penalty(Omega, Xi) -> float:
    return float(np.sum(Xi * np.abs(Omega)))


def _objective_from_chol(Omega, chol, W, prob):
    return (-logdet_pd(chol) + float(np.sum(prob.S * Omega)) + float(np.sum(prob.M * W))
            + l1_penalty(Omega, prob.Xi))


def objective(Omega, prob: CglassoProblem) -> float:
    """``g(Omega) + sum_{k,k'} Xi_kk' |omega_kk'|``."""
    Omega = np.asarray(Omega, dtype=float)
    chol = cholesky(Omega)
    return _objective_from_chol(Omega, chol, inverse_pd(Omega, chol), prob)


def gradient_smooth(Omega, prob: CglassoProblem) -> np.ndarray:
    """``S - W - W M W`` with ``W = Omega^{-1}``."""
    W = inverse_pd(np.asarray(Omega, dtype=float))
    G = prob.S - W - W @ prob.M @ W
    return (G + G.T) / 2


def min_norm_subgradient(Omega, prob: CglassoProblem) -> np.ndarray:
    grad = gradient_smooth(Omega, prob)
    return _min_norm_subgradient(np.asarray(Omega, dtype=float), grad, prob.Xi)


def _min_norm_subgradient(Omega, grad, Xi):
    out = np.sign(grad) * np.maximum(np.abs(grad) - Xi, 0.0)
    pos, neg = Omega > 0, Omega < 0
    out[pos] = grad[pos] + Xi[pos]
    out[neg] = grad[neg] - Xi[neg]
    return out


def partition_active(Omega, grad, Xi):
    """Split the upper-triangle coordinates into fixed and free sets.

    ``(k, k')`` is fixed when ``omega_kk' == 0`` and ``|grad_kk'| < Xi_kk'``;
    its minimum-norm subgradient is then zero. Both lists are row-major over
    ``k <= k'``.
    """
    q = Omega.shape[0]
    fixed, free = [], []
    for k in range(q):
        for l in range(k, q):
            if Omega[k, l] == 0.0 and abs(grad[k, l]) < Xi[k, l]:
                fixed.append((k, l))
            else:
                free.append((k, l))
    return fixed, free


@njit(cache=True)
def _coordinate_step(k, l, S, Omega, W, WMW, Q, D, U, Xi):
    q = W.shape[0]
    # w_k^T M w_l = (W M W)_kl
    mkl = WMW[k, l]
    # w_k^T D w_l = W[k, :] . U[:, l]
    wdw = 0.0
    for i in range(q):
        wdw += W[k, i] * U[i, l]
    if k != l:
        # (W M W D W)_kl = WMW[k, :] . U[:, l]; its transpose counterpart uses (l, k)
        xdw_kl = 0.0
        xdw_lk = 0.0
        for i in range(q):
            xdw_kl += WMW[k, i] * U[i, l]
            xdw_lk += WMW[l, i] * U[i, k]
        a = (W[k, l] ** 2 + W[k, k] * W[l, l] + W[k, k] * WMW[l, l]
             + W[l, l] * WMW[k, k] + 2.0 * W[k, l] * mkl)
        b = S[k, l] - W[k, l] + wdw - mkl + xdw_lk + xdw_kl
    else:
        xdw = 0.0
        for i in range(q):
            xdw += WMW[k, i] * U[i, k]
        a = W[k, k] ** 2 + 2.0 * W[k, k] * WMW[k, k]
        b = S[k, k] - W[k, k] + wdw - mkl + 2.0 * xdw
    if not a > 0.0:
        return math.nan
    c = Omega[k, l] + D[k, l]
    t = c - b / a
    shrunk = abs(t) - Xi[k, l] / a
    mu = -c
    if shrunk > 0.0:
        mu += math.copysign(shrunk, t)
    if mu != 0.0:
        D[k, l] += mu
        for i in range(q):
            U[k, i] += mu * W[l, i]
        if k != l:
            D[l, k] += mu
            for i in range(q):
                U[l, i] += mu * W[k, i]
    return mu


@njit(cache=True)
def _newton_sweeps(rows, cols, S, Omega, W, WMW, Q, D, U, Xi, tol, max_sweeps):
    m = rows.shape[0]
    for sweep in range(1, max_sweeps + 1):
        biggest = 0.0
        for idx in range(m):
            mu = _coordinate_step(rows[idx], cols[idx], S, Omega, W, WMW, Q, D, U, Xi)
            if math.isnan(mu):
                return -sweep
            biggest = max(biggest, abs(mu))
        scale = 0.0
        for idx in range(m):
            scale = max(scale, abs(D[rows[idx], cols[idx]]))
        if biggest <= tol * max(scale, 1e-12):
            return sweep
    return max_sweeps


def newton_coordinate_step(k: int, l: int, state: CgquicState, prob: CglassoProblem) -> float:
    """One coordinate-descent update of the Newton direction at ``(k, l)``.

    Updates ``state.D`` (symmetrically) and the ``U = D W`` cache in place and
    returns the increment ``mu``.
    """
    mu = _coordinate_step(k, l, prob.S, state.Omega, state.W, state.WMW, state.Q,
                          state.D, state.U, prob.Xi)
    if math.isnan(mu):
        raise NumericalError(f"non-positive curvature at coordinate ({k}, {l})")
    return mu


def descent_measure(state: CgquicState, grad, prob: CglassoProblem) -> float:
    """``tr(grad^T D) + ||Omega + D||_{1,Xi} - ||Omega||_{1,Xi}``."""
    D, Om = state.D, state.Omega
    moved = Om + D
    # where the sign is kept the change in |omega| is exactly sign * D, which
    # avoids cancellation once D is tiny next to Omega
    same = np.sign(moved) == np.sign(Om)
    change = np.where(same, np.sign(Om) * D, np.abs(moved) - np.abs(Om))
    return float(np.sum(grad * D)) + float(np.sum(prob.Xi * change))


# objective values carry a few ulps of roundoff
_F_SLACK = 8 * np.finfo(float).eps


def armijo_step(state: CgquicState, grad, prob: CglassoProblem, opts: CgquicOptions):
    """Backtrack ``alpha = 1, beta, beta^2, ...`` along ``state.D``.

    Returns ``(alpha, Omega_next, chol_next, f_next)``.
    """
    D = state.D
    delta = descent_measure(state, grad, prob)
    f0 = state.objective
    slack = _F_SLACK * max(abs(f0), 1.0)
    alpha = 1.0
    last = math.nan
    while alpha >= 1e-12:
        trial = state.Omega + alpha * D
        trial = (trial + trial.T) / 2
        try:
            chol = cholesky(trial)
        except NotPositiveDefiniteError:
            alpha *= opts.beta
            continue
        W = linalg.cho_solve((chol, True), np.eye(trial.shape[0]))
        last = (-logdet_pd(chol) + float(np.sum(prob.S * trial)) + float(np.sum(prob.M * W))
                + l1_penalty(trial, prob.Xi))
        if last <= f0 + alpha * opts.sigma * delta + slack:
            return alpha, trial, chol, last
        alpha *= opts.beta
    raise LineSearchError("line search failed", delta=delta, f_current=f0, f_last_trial=last)


def solve(prob: CglassoProblem, opts: CgquicOptions | None = None) -> CgquicResult:
    opts = opts or CgquicOptions()
    state = CgquicState.at(prob.Omega_init, prob)
    trace = [state.objective]
    steps = []
    converged = False
    it = 0
    for it in range(1, opts.max_outer_iter + 1):
        grad = prob.S - state.W - state.WMW
        grad = (grad + grad.T) / 2
        subgrad = _min_norm_subgradient(state.Omega, grad, prob.Xi)
        if np.max(np.abs(subgrad)) == 0.0:
            converged = True
            it -= 1
            break
        _, free = partition_active(state.Omega, grad, prob.Xi)
        rows = np.array([f[0] for f in free], dtype=np.int64)
        cols = np.array([f[1] for f in free], dtype=np.int64)
        state.D[:] = 0.0
        state.U[:] = 0.0
        code = _newton_sweeps(rows, cols, prob.S, state.Omega, state.W, state.WMW, state.Q,
                              state.D, state.U, prob.Xi, opts.inner_tol, opts.max_inner_sweeps)
        if code < 0:
            raise NumericalError(f"non-positive curvature in Newton sweep {-code}")
        if not np.any(state.D):
            converged = True
            it -= 1
            break
        delta = descent_measure(state, grad, prob)
        if not delta < 0:
            # model cannot improve: stationary up to roundoff
            converged = True
            it -= 1
            break
        alpha, Omega_next, chol, f_next = armijo_step(state, grad, prob, opts)
        if not math.isfinite(f_next):
            raise NumericalError(f"non-finite objective at outer iteration {it}")
        f_prev = state.objective
        step = alpha * float(np.max(np.abs(state.D)))
        state = CgquicState.at(Omega_next, prob, chol)
        trace.append(state.objective)
        steps.append(alpha)
        # a flat objective alone stops one Newton step early; also ask for a short step
        small_step = step <= opts.outer_tol * max(float(np.max(np.abs(state.Omega))), 1.0)
        if small_step and abs(f_prev - state.objective) <= opts.outer_tol * max(abs(f_prev), 1.0):
            converged = True
            break
    return CgquicResult(state.Omega, trace, it, converged, steps)
