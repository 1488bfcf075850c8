"""Regularized calibrated estimation of local average treatment effects
with instrumental variables in high dimensions."""

from .aipw import (
    EstimatingFunctions,
    LateReport,
    estimate_effects,
    estimating_functions,
    ipw_wald,
    or_plugin,
)
from .crossval import CvConfig, CvResult, make_folds, select_lambda
from .diagnostics import (
    boundedness_check,
    calibration_differences,
    influence_values,
    kkt_balance_report,
)
from .errors import IvlateError
from .io import BasisRecipe, Schema, expand_basis, load_dataset, write_dataset
from .model import (
    BasisSpec,
    Dataset,
    DesignView,
    NuisanceEstimates,
    Term,
    build_design,
    standardize,
    validate_spec,
)
from .nuisance import fit_nuisances, post_lasso_refit
from .simulate import (
    SimConfig,
    SummaryTable,
    gen_covariates,
    gen_sample,
    oracle_constants,
    run_study,
    true_theta,
)
from .solver import (
    LossObjective,
    PenalizedFit,
    SolverConfig,
    fit_penalized,
    kkt_residuals,
    lambda_max,
)

__version__ = "0.1.0"

__all__ = [
    "BasisRecipe",
    "BasisSpec",
    "CvConfig",
    "CvResult",
    "Dataset",
    "DesignView",
    "EstimatingFunctions",
    "IvlateError",
    "LateReport",
    "LossObjective",
    "NuisanceEstimates",
    "PenalizedFit",
    "Schema",
    "SimConfig",
    "SolverConfig",
    "SummaryTable",
    "Term",
    "boundedness_check",
    "build_design",
    "calibration_differences",
    "estimate_effects",
    "estimating_functions",
    "expand_basis",
    "fit_nuisances",
    "fit_penalized",
    "gen_covariates",
    "gen_sample",
    "influence_values",
    "ipw_wald",
    "kkt_balance_report",
    "kkt_residuals",
    "lambda_max",
    "load_dataset",
    "make_folds",
    "or_plugin",
    "oracle_constants",
    "post_lasso_refit",
    "run_study",
    "select_lambda",
    "standardize",
    "true_theta",
    "validate_spec",
    "write_dataset",
]
