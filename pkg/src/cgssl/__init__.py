"""Sparse Gaussian chain graph models with spike-and-slab LASSO priors."""
from .cgquic import CglassoProblem, CgquicOptions, CgquicResult, solve as cgquic_solve
from .ecm import EcmOptions, FitResult, ecm_fit
from .errors import CgsslError, LineSearchError, NotPositiveDefiniteError, NumericalError
from .model import (ChainGraphParams, Dataset, SslConfig, direct_effect, log_posterior,
                    marginal_coefficients, standardize_design)
from .path import PenaltyLadders, dcpe, default_config, default_ladders, dpe
from .psi import PsiSolveOptions, update_psi, update_theta
from .sim import BenchmarkConfig, OmegaPattern, gen_dataset, gen_omega, gen_psi, run_benchmark, support_metrics

__all__ = [
    "BenchmarkConfig", "CglassoProblem", "CgquicOptions", "CgquicResult", "CgsslError",
    "ChainGraphParams", "Dataset", "EcmOptions", "FitResult", "LineSearchError",
    "NotPositiveDefiniteError", "NumericalError", "OmegaPattern", "PenaltyLadders",
    "PsiSolveOptions", "SslConfig", "cgquic_solve", "dcpe", "default_config",
    "default_ladders", "direct_effect", "dpe", "ecm_fit", "gen_dataset", "gen_omega",
    "gen_psi", "log_posterior", "marginal_coefficients", "run_benchmark",
    "standardize_design", "support_metrics", "update_psi", "update_theta",
]
__version__ = "0.1.0"
