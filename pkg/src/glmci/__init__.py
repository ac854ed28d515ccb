"""Penalized GLM fitting with post-selection confidence intervals.

Lasso, ridge and elastic-net estimation for Gaussian, Poisson, negative
binomial and Tweedie responses, plus four interval constructions: two-stage
penalized-lasso-then-ridge bootstrap, modified residual bootstrap, paired
bootstrap, and de-biased estimators with direct or nodewise precision.
"""

__version__ = "0.1.0"

from .bootstrap import (
    BootstrapConfig,
    IntervalTable,
    LambdaRule,
    modified_estimator,
    paired_bootstrap_glm,
    percentile_interval,
    plr_glm,
    residual_bootstrap_glm,
    residual_bootstrap_lm,
)
from .data import Dataset, design_with_intercept, load_csv
from .debias import (
    DebiasResult,
    PrecisionEstimate,
    debias_glm,
    debias_lm,
    default_projection_mu,
    direct_theta,
    nodewise_theta,
    solve_u_column,
    weighted_design,
)
from .errors import (
    ConditioningError,
    ConfigError,
    ConvergenceError,
    DataError,
    DegenerateDataError,
    FoldDegeneracyError,
    GlmciError,
    InfeasibleConstraintError,
    InputValidationError,
    IrlsDivergenceError,
    NumericOverflowError,
    ReplicateFailureError,
    SingularityError,
    UnsupportedFamilyError,
)
from .families import FamilySpec
from .simbench import (
    CoverageReport,
    SimMethodConfig,
    SimScenario,
    coverage_rows,
    ramp_coefficients,
    register_ci_method,
    run_coverage_experiment,
    sample_tweedie,
    width_comparison,
)
from .solver import (
    CvResult,
    FitResult,
    PenaltySpec,
    SolverConfig,
    cross_validate,
    fit_path,
    fit_penalized_glm,
    lambda_path,
    select_tweedie_power,
)

__all__ = [
    "__version__",
    "BootstrapConfig",
    "ConditioningError",
    "ConfigError",
    "ConvergenceError",
    "CoverageReport",
    "CvResult",
    "DataError",
    "Dataset",
    "DebiasResult",
    "DegenerateDataError",
    "FamilySpec",
    "FitResult",
    "FoldDegeneracyError",
    "GlmciError",
    "InfeasibleConstraintError",
    "InputValidationError",
    "IntervalTable",
    "IrlsDivergenceError",
    "LambdaRule",
    "NumericOverflowError",
    "PenaltySpec",
    "PrecisionEstimate",
    "ReplicateFailureError",
    "SimMethodConfig",
    "SimScenario",
    "SingularityError",
    "SolverConfig",
    "UnsupportedFamilyError",
    "coverage_rows",
    "cross_validate",
    "debias_glm",
    "debias_lm",
    "default_projection_mu",
    "design_with_intercept",
    "direct_theta",
    "fit_path",
    "fit_penalized_glm",
    "lambda_path",
    "load_csv",
    "modified_estimator",
    "nodewise_theta",
    "paired_bootstrap_glm",
    "percentile_interval",
    "plr_glm",
    "ramp_coefficients",
    "register_ci_method",
    "residual_bootstrap_glm",
    "residual_bootstrap_lm",
    "run_coverage_experiment",
    "sample_tweedie",
    "select_tweedie_power",
    "solve_u_column",
    "weighted_design",
    "width_comparison",
]
