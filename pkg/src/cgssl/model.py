"""Chain graph model containers and the log posterior.

The model is ``y | x ~ N(Omega^{-1} Psi^T x, Omega^{-1})`` where ``Psi`` (p x q)
holds direct predictor-to-response effects and ``Omega`` (q x q) is the residual
precision matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NotPositiveDefiniteError

_STD_TOL = 1e-10


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def cholesky(omega: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``omega``; raises NotPositiveDefiniteError."""
    try:
        return linalg.cholesky(omega, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc


def inverse_pd(omega: np.ndarray, chol: np.ndarray | None = None) -> np.ndarray:
    if chol is None:
        chol = cholesky(omega)
    inv = linalg.cho_solve((chol, True), np.eye(omega.shape[0]))
    return (inv + inv.T) / 2


def logdet_pd(chol: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


@dataclass(frozen=True)
class Dataset:
    """Standardized design ``X`` (n x p) and responses ``Y`` (n x q).

    Every column of ``X`` must have zero mean and squared norm ``n``. Use
    :meth:`from_raw` to build one from an unscaled design.
    """

    X: np.ndarray
    Y: np.ndarray
    col_centers: np.ndarray | None = None
    col_scales: np.ndarray | None = None

    def __post_init__(self):
        X = _frozen(self.X)
        Y = _frozen(self.Y)
        if X.ndim != 2 or Y.ndim != 2:
            raise ValueError("X and Y must be 2-d arrays")
        n, p = X.shape
        if Y.shape[0] != n:
            raise ValueError(f"X has {n} rows but Y has {Y.shape[0]} rows")
        if n < 2 or p < 1 or Y.shape[1] < 1:
            raise ValueError(f"need n >= 2, p >= 1, q >= 1; got n={n}, p={p}, q={Y.shape[1]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("X and Y must be finite")
        means = X.mean(axis=0)
        sq = np.sum(X * X, axis=0)
        if np.any(np.abs(means) > _STD_TOL) or np.any(np.abs(sq - n) > _STD_TOL * n):
            raise ValueError("X is not standardized (zero column means, squared column norms n)")
        centers = np.zeros(p) if self.col_centers is None else self.col_centers
        scales = np.ones(p) if self.col_scales is None else self.col_scales
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "col_centers", _frozen(centers))
        object.__setattr__(self, "col_scales", _frozen(scales))

    @classmethod
    def from_raw(cls, raw_X, Y) -> "Dataset":
        X, centers, scales = standardize_design(raw_X)
        return cls(X, Y, centers, scales)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class ChainGraphParams:
    Psi: np.ndarray
    Omega: np.ndarray
    theta: float = 0.5
    eta: float = 0.5

    def __post_init__(self):
        Psi = _frozen(self.Psi)
        Omega = _frozen(self.Omega)
        if Psi.ndim != 2 or Omega.ndim != 2 or Omega.shape != (Psi.shape[1], Psi.shape[1]):
            raise ValueError(f"incompatible shapes Psi {Psi.shape}, Omega {Omega.shape}")
        if not np.array_equal(Omega, Omega.T):
            raise ValueError("Omega must be exactly symmetric")
        cholesky(Omega)
        if not (0.0 <= self.theta <= 1.0 and 0.0 <= self.eta <= 1.0):
            raise ValueError("theta and eta must lie in [0, 1]")
        object.__setattr__(self, "Psi", Psi)
        object.__setattr__(self, "Omega", Omega)
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "eta", float(self.eta))

    @classmethod
    def default(cls, p: int, q: int) -> "ChainGraphParams":
        return cls(np.zeros((p, q)), np.eye(q), 0.5, 0.5)


@dataclass(frozen=True)
class SslConfig:
    """Spike-and-slab hyperparameters.

    ``lambda0``/``lambda1`` are the spike/slab Laplace rates for ``Psi``,
    ``xi0``/``xi1`` those for the off-diagonal of ``Omega`` and ``xi_diag`` the
    exponential rate on its diagonal. Equal spike and slab rates are accepted
    (the mixture then collapses) but the spike must never be the smaller one.
    """

    lambda0: float
    lambda1: float
    xi0: float
    xi1: float
    xi_diag: float = 1.0
    a_theta: float = 1.0
    b_theta: float = 1.0
    a_eta: float = 1.0
    b_eta: float = 1.0

    def __post_init__(self):
        for name in ("lambda0", "lambda1", "xi0", "xi1", "xi_diag",
                     "a_theta", "b_theta", "a_eta", "b_eta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")
        if self.lambda1 > self.lambda0:
            raise ValueError("lambda1 (slab) must not exceed lambda0 (spike)")
        if self.xi1 > self.xi0:
            raise ValueError("xi1 (slab) must not exceed xi0 (spike)")


def standardize_design(raw_X):
    """Center each column and scale it to squared norm ``n``.

    Returns ``(X, centers, scales)`` with ``X = (raw_X - centers) / scales``.
    """
    raw = np.asarray(raw_X, dtype=float)
    if raw.ndim != 2:
        raise ValueError("design must be a 2-d array")
    n = raw.shape[0]
    if n < 2:
        raise ValueError("need at least two rows to standardize")
    centers = raw.mean(axis=0)
    centered = raw - centers
    norms = np.sqrt(np.sum(centered * centered, axis=0))
    for j, (nrm, col) in enumerate(zip(norms, raw.T)):
        if nrm == 0.0 or np.all(col == col[0]):
            raise ValueError(f"constant column {j}")
    scales = norms / np.sqrt(n)
    return centered / scales, centers, scales


def residual_matrix(params: ChainGraphParams, data: Dataset) -> np.ndarray:
    """``R = Y Omega - X Psi``."""
    Psi, Omega = params.Psi, params.Omega
    if Psi.shape != (data.p, data.q):
        raise ValueError(f"Psi has shape {Psi.shape}, expected {(data.p, data.q)}")
    return data.Y @ Omega - data.X @ Psi


def marginal_coefficients(params: ChainGraphParams) -> np.ndarray:
    """``B = Psi Omega^{-1}`` via a Cholesky solve."""
    chol = cholesky(params.Omega)
    return linalg.cho_solve((chol, True), params.Psi.T).T


def direct_effect(params: ChainGraphParams, j: int, k: int) -> float:
    """Effect of predictor ``j`` on response ``k`` holding everything else fixed.

    Indices are zero-based.
    """
    p, q = params.Psi.shape
    if not (0 <= j < p and 0 <= k < q):
        raise IndexError(f"index ({j}, {k}) out of range for Psi of shape {(p, q)}")
    return -params.Psi[j, k] / params.Omega[k, k]


def condition_number(R) -> float:
    """Ratio of extreme singular values of ``R``; ``inf`` when rank deficient."""
    R = np.asarray(R, dtype=float)
    if R.size == 0:
        raise ValueError("condition number of an empty matrix")
    s = np.linalg.svd(R, compute_uv=False)
    smax, smin = s[0], s[-1]
    if smax == 0.0 or smin <= smax * np.finfo(float).eps * max(R.shape):
        return float("inf")
    return float(smax / smin)


def _log_mixture(x, rate_spike, rate_slab, mix):
    # log(mix*slab*e^{-slab|x|} + (1-mix)*spike*e^{-spike|x|})
    ax = np.abs(x)
    return np.logaddexp(np.log(mix) + np.log(rate_slab) - rate_slab * ax,
                        np.log1p(-mix) + np.log(rate_spike) - rate_spike * ax)


def log_posterior(params: ChainGraphParams, data: Dataset, cfg: SslConfig) -> float:
    """Log posterior density up to parameter-free additive constants.

    Larger is better. The Gaussian normalizing constant and the Laplace
    ``1/2`` factors are dropped.
    """
    theta, eta = params.theta, params.eta
    if not (0.0 < theta < 1.0 and 0.0 < eta < 1.0):
        raise ValueError("theta and eta must lie strictly inside (0, 1)")
    n = data.n
    Omega = params.Omega
    chol = cholesky(Omega)
    R = residual_matrix(params, data)
    # tr(R Omega^{-1} R^T) = ||L^{-1} R^T||_F^2
    half = linalg.solve_triangular(chol, R.T, lower=True)
    value = 0.5 * n * logdet_pd(chol) - 0.5 * float(np.sum(half * half))

    value += float(np.sum(_log_mixture(params.Psi, cfg.lambda0, cfg.lambda1, theta)))
    iu = np.triu_indices(Omega.shape[0], k=1)
    value += float(np.sum(_log_mixture(Omega[iu], cfg.xi0, cfg.xi1, eta)))
    value -= cfg.xi_diag * float(np.trace(Omega))
    value += (cfg.a_theta - 1.0) * np.log(theta) + (cfg.b_theta - 1.0) * np.log1p(-theta)
    value += (cfg.a_eta - 1.0) * np.log(eta) + (cfg.b_eta - 1.0) * np.log1p(-eta)
    return float(value)
