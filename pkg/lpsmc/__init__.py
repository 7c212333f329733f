"""lpsmc - modèle de guérison par mélange, P-splines et approximation de Laplace"""

from lpsmc.config import ConfigReader, get_config, get_threads, reset_config
from lpsmc.credible_intervals import (
    CredibleInterval,
    ci_baseline_survival,
    ci_incidence,
    ci_latency_survival,
    ci_latent,
    survival_curve,
    survival_quantile,
)
from lpsmc.dataset import ColumnMapping, load_csv
from lpsmc.kaplan_meier import KaplanMeierCurve, kaplan_meier
from lpsmc.laplace_inference import (
    ConditionalPosterior,
    FitResult,
    Hyperparameters,
    bracket_mode,
    fit,
    laplace_approx,
    log_posterior_v,
    prior_precision,
)
from lpsmc.mixture_cure_model import (
    BinGrid,
    LatentVector,
    SurvivalDataset,
    loglik,
    loglik_gradient,
    loglik_hessian,
)
from lpsmc.spline_basis import KnotGrid, PenaltyMatrix, basis_matrix, bspline_eval, penalty_matrix

__version__ = "0.1.0"

__all__ = [
    "ConfigReader",
    "get_config",
    "reset_config",
    "get_threads",
    "KnotGrid",
    "PenaltyMatrix",
    "bspline_eval",
    "basis_matrix",
    "penalty_matrix",
    "SurvivalDataset",
    "LatentVector",
    "BinGrid",
    "loglik",
    "loglik_gradient",
    "loglik_hessian",
    "Hyperparameters",
    "ConditionalPosterior",
    "FitResult",
    "prior_precision",
    "laplace_approx",
    "log_posterior_v",
    "bracket_mode",
    "fit",
    "CredibleInterval",
    "ci_latent",
    "ci_incidence",
    "ci_baseline_survival",
    "ci_latency_survival",
    "survival_quantile",
    "survival_curve",
    "ColumnMapping",
    "load_csv",
    "KaplanMeierCurve",
    "kaplan_meier",
]
