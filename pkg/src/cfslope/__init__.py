"""Counterfactual and factual slope estimation with EIF-based doubly robust inference."""

from .data import Dataset, FilterSpec, VariableRoles, apply_filter, load_dataset
from .design import build_design
from .eif import (
    PseudoOutcome,
    SlopeEstimate,
    estimate_conditional_logit_cf_slope,
    estimate_counterfactual_slope,
    estimate_dg_slope,
    estimate_factual_slopes,
    estimate_linear_slope,
    estimate_logit_slope,
    pseudo_outcome,
    stabilized_pseudo_outcomes,
)
from .errors import (
    CfslopeError,
    ConfigurationError,
    DataError,
    DegenerateFitError,
    EstimationError,
    InsufficientDataError,
)
from .glm import FitDiagnostics, fit_logistic, fit_ols
from .inference import AnalysisResult, TestResult, contrast, joint_se, run_ge, run_st
from .neural import NeuralNet, cross_validated_fit, fit_network, loss_and_grad
from .nuisance import (
    ModelSpec,
    NuisanceFit,
    censor_tau,
    cross_fit,
    crossfit_tau,
    fit_outcome,
    fit_propensity,
    fit_tau,
    split_folds,
)
from .simulation import (
    DgpConfig,
    ExperimentSpec,
    GeneratedSample,
    OracleTruth,
    analytic_linear_cf,
    dgp_b_logit_linear,
    generate,
    make_dgp,
    oracle_truth,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
