"""Spike-and-slab LASSO penalty mathematics.

All functions accept scalars or numpy arrays for ``x`` and work in log space,
so they stay finite for ``|x|`` and rates up to about 1e8.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class MixtureRates:
    """Spike rate, slab rate and slab mixing weight of one Laplace mixture.

    For ``Psi`` this is ``(lambda0, lambda1, theta)``, for the off-diagonal of
    ``Omega`` it is ``(xi0, xi1, eta)``.
    """

    rate_spike: float
    rate_slab: float
    mix: float

    def __post_init__(self):
        if not (self.rate_spike > 0 and self.rate_slab > 0):
            raise ValueError("rates must be positive")
        if self.rate_slab > self.rate_spike:
            raise ValueError("slab rate must not exceed spike rate")
        if not (0.0 < self.mix < 1.0):
            raise ValueError(f"mixing weight must lie in (0, 1), got {self.mix!r}")

    @property
    def _logit_offset(self) -> float:
        # log[(1-mix) spike] - log[mix slab]
        return (math.log1p(-self.mix) + math.log(self.rate_spike)
                - math.log(self.mix) - math.log(self.rate_slab))


def _slab_logit(x, r: MixtureRates):
    return (r.rate_spike - r.rate_slab) * np.abs(x) - r._logit_offset


def pstar(x, r: MixtureRates):
    """Conditional probability that ``x`` was drawn from the slab."""
    out = expit(_slab_logit(x, r))
    return float(out) if np.ndim(out) == 0 else out


qstar = pstar


def log_pstar(x, r: MixtureRates):
    out = -np.logaddexp(0.0, -_slab_logit(x, r))
    return float(out) if np.ndim(out) == 0 else out


def lambda_star(x, r: MixtureRates):
    """Adaptive penalty: slab/spike rates averaged by the slab probability."""
    ps = pstar(x, r)
    return r.rate_slab * ps + r.rate_spike * (1.0 - ps)


def pen(x, r: MixtureRates):
    """Log prior ratio ``log(pi(x) / pi(0))`` of the Laplace mixture.

    Written as ``-rate_slab*|x| + log(pstar(0) / pstar(x))``; its derivative is
    ``-lambda_star(x) * sign(x)``.
    """
    return -r.rate_slab * np.abs(x) + log_pstar(0.0, r) - log_pstar(x, r)


def pen_second_derivative(x, r: MixtureRates):
    """Curvature of ``pen`` away from zero: ``(spike-slab)^2 p*(1-p*)``."""
    ps = pstar(x, r)
    return (r.rate_spike - r.rate_slab) ** 2 * ps * (1.0 - ps)


class ThresholdBounds(NamedTuple):
    delta_lower: float
    delta_upper: float
    valid: bool


def _largest_curvature_root(level: float, r: MixtureRates, tol: float = 1e-10):
    """Largest ``x >= 0`` with ``pen''(x) = level`` by bisection, or None."""
    gap = r.rate_spike - r.rate_slab
    if gap <= 0:
        return None
    f = lambda t: pen_second_derivative(t, r) - level
    # pen'' is unimodal in |x| with its peak where p* = 1/2.
    peak = max(r._logit_offset / gap, 0.0)
    hi = max(50.0 / gap, 2.0 * peak)
    if f(peak) <= 0 or f(hi) >= 0:
        return None
    lo = peak
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def threshold_bounds(omega_inv_kk: float, n: int, r: MixtureRates) -> ThresholdBounds:
    """Lower/upper bounds on the hard threshold for one ``Psi`` coordinate.

    ``omega_inv_kk`` is the ``(k, k)`` entry of ``Omega^{-1}``. The bounds are
    on the scale of the coordinate statistic ``z``. ``valid`` is True when the
    spike/slab gap exceeds ``2 sqrt(n omega_inv_kk)``; ``delta_lower`` is NaN
    when it cannot be computed.
    """
    if omega_inv_kk <= 0:
        raise ValueError("omega_inv_kk must be positive")
    log_p0 = log_pstar(0.0, r)
    if log_p0 >= 0.0:
        raise ValueError("pstar(0) must be below 1")
    v = omega_inv_kk
    slab_term = r.rate_slab / v
    upper = math.sqrt(-2.0 * n * log_p0 / v) + slab_term

    valid = (r.rate_spike - r.rate_slab) > 2.0 * math.sqrt(n * v)
    lower = math.nan
    root = _largest_curvature_root(n * v, r)
    if root is not None:
        d = (-(lambda_star(root, r) - r.rate_slab) ** 2
             - 2.0 * n * v * log_pstar(root, r))
        radicand = -2.0 * n * log_p0 / v - d / v ** 2
        if radicand >= 0:
            lower = math.sqrt(radicand) + slab_term
    if math.isnan(lower):
        valid = False
    return ThresholdBounds(lower, upper, valid)


class IntersectionThreshold(NamedTuple):
    delta: float
    floored: bool


def intersection_threshold(r: MixtureRates) -> IntersectionThreshold:
    """``|x|`` at which the weighted spike and slab densities are equal.

    Floored at zero (``floored=True``) when the slab dominates everywhere.
    """
    gap = r.rate_spike - r.rate_slab
    if gap <= 0:
        raise ValueError("intersection threshold needs rate_slab < rate_spike")
    delta = r._logit_offset / gap
    if delta <= 0:
        return IntersectionThreshold(0.0, True)
    return IntersectionThreshold(delta, False)


def effective_dimension(M, delta: float, off_diagonal_only: bool = False) -> int:
    """Number of entries with ``|value| > delta``.

    With ``off_diagonal_only`` only the strict lower triangle is counted, so a
    symmetric pair contributes once.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    M = np.asarray(M, dtype=float)
    if off_diagonal_only:
        M = M[np.tril_indices(M.shape[0], k=-1)]
    return int(np.count_nonzero(np.abs(M) > delta))
