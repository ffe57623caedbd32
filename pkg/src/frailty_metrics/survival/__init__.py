"""Cox proportional-hazards model with Efron/Breslow ties and Wald inference."""

from ._core import (
    KERNEL_BACKEND,
    MAX_ABS_BETA,
    TIES_METHODS,
    CoxFitResult,
    SurvivalData,
    cox_gradient_hessian,
    cox_log_partial_likelihood,
    fit_cox,
    wald_pvalue,
)

__all__ = [
    "KERNEL_BACKEND",
    "MAX_ABS_BETA",
    "TIES_METHODS",
    "CoxFitResult",
    "SurvivalData",
    "cox_gradient_hessian",
    "cox_log_partial_likelihood",
    "fit_cox",
    "wald_pvalue",
]
