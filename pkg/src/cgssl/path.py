"""Warm-started exploration over ladders of spike penalties."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .ecm import EcmOptions, FitResult, run_ecm
from .errors import CgsslError, NumericalError
from .model import ChainGraphParams, Dataset, SslConfig, log_posterior


@dataclass(frozen=True)
class PenaltyLadders:
    lambda0_ladder: tuple
    xi0_ladder: tuple
    lambda1: float
    xi1: float

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lambda0_ladder)
        xi = tuple(float(v) for v in self.xi0_ladder)
        for name, ladder, slab in (("lambda0", lam, self.lambda1), ("xi0", xi, self.xi1)):
            if not ladder:
                raise ValueError(f"{name} ladder is empty")
            if any(b <= a for a, b in zip(ladder, ladder[1:])):
                raise ValueError(f"{name} ladder must be strictly increasing")
            if not (0 < slab < ladder[0]):
                raise ValueError(f"{name} ladder must start above its slab rate {slab}")
        object.__setattr__(self, "lambda0_ladder", lam)
        object.__setattr__(self, "xi0_ladder", xi)
        object.__setattr__(self, "lambda1", float(self.lambda1))
        object.__setattr__(self, "xi1", float(self.xi1))


def default_ladders(n: int, p: int, q: int, length: int = 10) -> PenaltyLadders:
    """Slabs ``lambda1 = 1`` and ``xi1 = n/100``; spikes from slab + 1 up to ``n``."""
    if min(n, p, q) < 1:
        raise ValueError("n, p and q must be positive")
    if n < 3:
        raise ValueError("default ladders need n >= 3")
    lambda1, xi1 = 1.0, 0.01 * n
    return PenaltyLadders(
        tuple(np.linspace(lambda1 + 1.0, n, length).tolist()),
        tuple(np.linspace(xi1 + 1.0, n, length).tolist()),
        lambda1, xi1)


def default_config(n: int, p: int, q: int, ladders: PenaltyLadders | None = None,
                   xi_diag: float = 1.0) -> SslConfig:
    """Hyperparameters ``a_theta = 1, b_theta = pq, a_eta = 1, b_eta = q``.

    The spike rates are set to the first rung of each ladder.
    """
    ladders = ladders or default_ladders(n, p, q)
    return SslConfig(ladders.lambda0_ladder[0], ladders.lambda1,
                     ladders.xi0_ladder[0], ladders.xi1, xi_diag,
                     a_theta=1.0, b_theta=float(p * q), a_eta=1.0, b_eta=float(q))


def _cell_config(cfg_base, ladders, s, t):
    return replace(cfg_base, lambda0=ladders.lambda0_ladder[s], lambda1=ladders.lambda1,
                   xi0=ladders.xi0_ladder[t], xi1=ladders.xi1)


def wavefront_order(n_lambda: int, n_xi: int):
    """Cells ``(s, t)`` grouped by ``s + t``, row-major within a group."""
    return [(s, m - s) for m in range(n_lambda + n_xi - 1)
            for s in range(n_lambda) if 0 <= m - s < n_xi]


def choose_warm_start(grid, s, t, data, cfg):
    """Neighbor with the largest log posterior under ``cfg``, or None at the corner.

    Candidates are ``(s-1, t-1)``, ``(s, t-1)`` and ``(s-1, t)``; ties go to the
    first in that order.
    """
    best, best_val = None, -np.inf
    for a, b in ((s - 1, t - 1), (s, t - 1), (s - 1, t)):
        if a < 0 or b < 0:
            continue
        val = log_posterior(grid[a][b].params, data, cfg)
        if val > best_val:
            best, best_val = (a, b), val
    return best


def warm_start_params(fit: FitResult, p: int, q: int) -> ChainGraphParams:
    if fit.guardrail_triggered:
        return ChainGraphParams.default(p, q)
    return fit.params


def dpe(data: Dataset, ladders: PenaltyLadders, cfg_base: SslConfig | None = None,
        opts: EcmOptions | None = None):
    """Dynamic posterior exploration over the ``lambda0 x xi0`` grid.

    Returns ``(grid, final)`` where ``grid[s][t]`` is the fit at
    ``(lambda0_ladder[s], xi0_ladder[t])`` and ``final`` is the last cell.
    Each fit records the neighbor it was warm-started from.
    """
    cfg_base = cfg_base or default_config(data.n, data.p, data.q, ladders)
    L, K = len(ladders.lambda0_ladder), len(ladders.xi0_ladder)
    grid = [[None] * K for _ in range(L)]
    for s, t in wavefront_order(L, K):
        cfg = _cell_config(cfg_base, ladders, s, t)
        origin = choose_warm_start(grid, s, t, data, cfg)
        init = None if origin is None else warm_start_params(grid[origin[0]][origin[1]],
                                                             data.p, data.q)
        try:
            fit = run_ecm(data, cfg, init, opts)
        except CgsslError as exc:
            raise NumericalError(f"grid cell ({s}, {t}): {exc}") from exc
        fit.warm_start_from = origin
        grid[s][t] = fit
    return grid, grid[L - 1][K - 1]


def dcpe(data: Dataset, ladders: PenaltyLadders, cfg_base: SslConfig | None = None,
         opts: EcmOptions | None = None) -> FitResult:
    """Dynamic conditional posterior exploration.

    Walks the ``lambda0`` ladder updating only ``(Psi, theta)`` with
    ``Omega = I`` and ``eta = 0.5``, then the ``xi0`` ladder updating only
    ``(Omega, eta)``, then runs a full fit at the last rung of both ladders.
    """
    cfg_base = cfg_base or default_config(data.n, data.p, data.q, ladders)
    L, K = len(ladders.lambda0_ladder), len(ladders.xi0_ladder)
    current = ChainGraphParams.default(data.p, data.q)
    phase = 1
    try:
        for s in range(L):
            cfg = _cell_config(cfg_base, ladders, s, 0)
            fit = run_ecm(data, cfg, current, opts, fit_omega=False)
            current = warm_start_params(fit, data.p, data.q)
        phase = 2
        for t in range(K):
            cfg = _cell_config(cfg_base, ladders, L - 1, t)
            fit = run_ecm(data, cfg, current, opts, fit_psi=False)
            current = fit.params
        phase = 3
        final = run_ecm(data, _cell_config(cfg_base, ladders, L - 1, K - 1), current, opts)
    except CgsslError as exc:
        raise NumericalError(f"phase {phase}: {exc}") from exc
    return final
