"""ECM fitting of the spike-and-slab chain graph model.

Each iteration runs an E-step on the ``Omega`` slab indicators, a conditional
maximization over ``(Psi, theta)`` and one over ``(Omega, eta)``. Both CM steps
are ascent steps on the log posterior, so the recorded trace is nondecreasing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import cgquic
from .errors import CgsslError, NumericalError
from .model import ChainGraphParams, Dataset, SslConfig, cholesky, condition_number, log_posterior
from .penalty import MixtureRates, pstar
from .psi import PsiSolveOptions, update_psi, update_theta

_MIX_LO, _MIX_HI = 1e-8, 1.0 - 1e-8


@dataclass(frozen=True)
class EcmOptions:
    ecm_tol: float = 1e-3
    max_ecm_iter: int = 500
    guard_multiplier: float = 10.0
    psi_opts: PsiSolveOptions = field(default_factory=PsiSolveOptions)
    quic_opts: cgquic.CgquicOptions = field(default_factory=cgquic.CgquicOptions)

    def __post_init__(self):
        if self.ecm_tol <= 0 or self.guard_multiplier <= 0:
            raise ValueError("ecm_tol and guard_multiplier must be positive")
        if self.max_ecm_iter < 1:
            raise ValueError("max_ecm_iter must be at least 1")


@dataclass
class FitResult:
    params: ChainGraphParams
    log_posterior_trace: list
    ecm_iterations: int
    converged: bool
    guardrail_triggered: bool
    support_psi: frozenset
    support_omega: frozenset
    log_posterior_change: float = math.nan
    warm_start_from: tuple | None = None


def supports(params: ChainGraphParams):
    """Nonzero ``(j, k)`` of ``Psi`` and nonzero ``(k, k')``, ``k < k'``, of ``Omega``."""
    psi = frozenset(zip(*map(lambda a: a.tolist(), np.nonzero(params.Psi))))
    iu = np.triu_indices(params.Omega.shape[0], k=1)
    mask = params.Omega[iu] != 0.0
    omega = frozenset(zip(iu[0][mask].tolist(), iu[1][mask].tolist()))
    return psi, omega


def e_step(Omega, eta: float, cfg: SslConfig) -> np.ndarray:
    """Slab probabilities of the off-diagonal entries of ``Omega`` (zero diagonal)."""
    if not (0.0 < eta < 1.0):
        raise ValueError("eta must lie in (0, 1)")
    Omega = np.asarray(Omega, dtype=float)
    Q = pstar(Omega, MixtureRates(cfg.xi0, cfg.xi1, eta))
    Q = np.array(Q, dtype=float, ndmin=2)
    np.fill_diagonal(Q, 0.0)
    return Q


def update_eta(Qstar, a_eta: float, b_eta: float, q: int) -> float:
    if q < 2:
        raise ValueError("eta update needs q >= 2")
    pairs = q * (q - 1) / 2
    denom = a_eta + b_eta - 2.0 + pairs
    if denom <= 0:
        raise ValueError("a_eta + b_eta - 2 + q(q-1)/2 must be positive")
    Qstar = np.asarray(Qstar, dtype=float)
    num = a_eta - 1.0 + float(Qstar[np.triu_indices(q, k=1)].sum())
    return min(max(num / denom, _MIX_LO), _MIX_HI)


def build_omega_penalty(Qstar, cfg: SslConfig, n: int) -> np.ndarray:
    """Element-wise weights for the ordered-pair penalty of the ``Omega`` subproblem."""
    Qstar = np.asarray(Qstar, dtype=float)
    Xi = (cfg.xi1 * Qstar + cfg.xi0 * (1.0 - Qstar)) / n
    np.fill_diagonal(Xi, 2.0 * cfg.xi_diag / n)
    return (Xi + Xi.T) / 2


def _relative_change(new, old):
    return float(np.max(np.abs(new - old) / (np.abs(old) + 1e-8), initial=0.0))


def _omega_step(Omega, eta, Psi, data, cfg, opts, S):
    Qstar = e_step(Omega, eta, cfg)
    if data.q >= 2:
        eta = update_eta(Qstar, cfg.a_eta, cfg.b_eta, data.q)
    XPsi = data.X @ Psi
    prob = cgquic.CglassoProblem(S, XPsi.T @ XPsi / data.n,
                                 build_omega_penalty(Qstar, cfg, data.n), Omega)
    Omega = cgquic.solve(prob, opts.quic_opts).Omega
    Omega = (Omega + Omega.T) / 2
    cholesky(Omega)
    return Omega, eta


def run_ecm(data: Dataset, cfg: SslConfig, init: ChainGraphParams | None = None,
            opts: EcmOptions | None = None, *, fit_psi: bool = True,
            fit_omega: bool = True) -> FitResult:
    """ECM loop with either conditional block optionally frozen.

    :func:`ecm_fit` runs both blocks; the conditional exploration phases use
    ``fit_psi=False`` or ``fit_omega=False``.
    """
    opts = opts or EcmOptions()
    init = init or ChainGraphParams.default(data.p, data.q)
    if init.Psi.shape != (data.p, data.q):
        raise ValueError(f"init Psi has shape {init.Psi.shape}, expected {(data.p, data.q)}")
    Psi = np.array(init.Psi)
    Omega = np.array(init.Omega)
    theta = min(max(init.theta, _MIX_LO), _MIX_HI)
    eta = min(max(init.eta, _MIX_LO), _MIX_HI)
    S = data.Y.T @ data.Y / data.n
    S = (S + S.T) / 2

    def params():
        return ChainGraphParams(Psi, Omega, theta, eta)

    trace = [log_posterior(params(), data, cfg)]
    converged = False
    t = 0
    for t in range(1, opts.max_ecm_iter + 1):
        Psi_old, Omega_old = Psi, Omega
        try:
            if fit_psi:
                Psi = update_psi(Psi, theta, Omega, data, cfg, opts.psi_opts).Psi
                theta = update_theta(Psi, theta, cfg, opts.psi_opts)
                cond = condition_number(data.Y @ Omega - data.X @ Psi)
                if cond > opts.guard_multiplier * data.n:
                    reset = ChainGraphParams.default(data.p, data.q)
                    reset = ChainGraphParams(reset.Psi, reset.Omega, theta, eta)
                    ps, po = supports(reset)
                    return FitResult(reset, trace, t, False, True, ps, po)
            if fit_omega:
                Omega, eta = _omega_step(Omega, eta, Psi, data, cfg, opts, S)
        except CgsslError as exc:
            raise NumericalError(f"ECM iteration {t}: {exc}") from exc
        trace.append(log_posterior(params(), data, cfg))
        change = max(_relative_change(Psi, Psi_old), _relative_change(Omega, Omega_old))
        if change < opts.ecm_tol:
            converged = True
            break
    final = params()
    ps, po = supports(final)
    delta = trace[-1] - trace[-2] if len(trace) > 1 else math.nan
    return FitResult(final, trace, t, converged, False, ps, po, delta)


def ecm_fit(data: Dataset, cfg: SslConfig, init: ChainGraphParams | None = None,
            opts: EcmOptions | None = None) -> FitResult:
    """MAP estimate of ``(Psi, Omega, theta, eta)`` for one penalty setting.

    Stops when the largest relative entry change of ``Psi`` and ``Omega``
    falls below ``opts.ecm_tol``. If ``cond(Y Omega - X Psi)`` exceeds
    ``guard_multiplier * n`` after a ``Psi`` update the fit is abandoned and
    returned as ``Psi = 0``, ``Omega = I`` with ``guardrail_triggered`` set.
    """
    return run_ecm(data, cfg, init, opts)
