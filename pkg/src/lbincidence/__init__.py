"""Incidence rate estimation from prevalent cohorts with follow-up.

Under a stationary incidence process, prevalence, incidence and mean
duration satisfy ``P = lambda * mu``. The mean duration is estimated by the
nonparametric MLE of the length-biased duration distribution, and the
incidence rate follows as ``P_hat / mu_hat``.
"""

__version__ = "0.1.0"

from .bootstrap import AgeEstimator, BootstrapResult, bootstrap_lambda, resample_frame
from .cohort import (
    AgeDistribution,
    LBMasses,
    PrevalentRecord,
    ScreeningFrame,
    SurvivalCurve,
    total_time,
    validate_frame,
)
from .diagnostics import DiagnosticResult, exchangeability_test
from .incidence import (
    IncidenceEstimate,
    denom_integral,
    estimate_by_age,
    estimate_overall,
    lambda_age_const,
    lambda_age_tv,
    lambda_hat,
    lemma1_residual,
    prevalence_hat,
)
from .npmle import (
    NpmleFit,
    loglik_lb,
    mean_duration,
    npmle_lb_em,
    survival_at,
    wang_product_limit,
)
from .sim import Dist, SimConfig, length_biased_draw, sim_equilibrium, sim_window

__all__ = [
    "AgeDistribution",
    "AgeEstimator",
    "BootstrapResult",
    "DiagnosticResult",
    "Dist",
    "IncidenceEstimate",
    "LBMasses",
    "NpmleFit",
    "PrevalentRecord",
    "ScreeningFrame",
    "SimConfig",
    "SurvivalCurve",
    "bootstrap_lambda",
    "denom_integral",
    "estimate_by_age",
    "estimate_overall",
    "exchangeability_test",
    "lambda_age_const",
    "lambda_age_tv",
    "lambda_hat",
    "lemma1_residual",
    "length_biased_draw",
    "loglik_lb",
    "mean_duration",
    "npmle_lb_em",
    "prevalence_hat",
    "resample_frame",
    "sim_equilibrium",
    "sim_window",
    "survival_at",
    "total_time",
    "validate_frame",
]
