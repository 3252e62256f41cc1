"""Logistic regression supervised by cell-aggregated label counts.

The package fits an individual-level logistic model when no row has a
label, using contingency tables of positive/negative counts over coarse
covariate cells as the only supervision; calibrates the intercept to an
external marginal; selects covariates by stepwise information criteria
under multiple imputation; and attaches bootstrap uncertainty to
group-level aggregates.
"""

from .data import (
    Cell,
    CellPartition,
    ContingencyTable,
    IndividualDataset,
    Interval,
    MarginalTarget,
    ValidationReport,
    assign_cells,
    banded_partition,
    check_identifiability,
    coverage_gaps,
    crossed_partition,
    validate_partition,
)
from .errors import (
    CtlogitError,
    NumericalFailure,
    ValidationFailure,
)
from .estimation import (
    FitResult,
    calibrate_intercept,
    fit_model,
    solve_intercept_for_marginal,
    solve_offset,
)
from .inference import (
    BootstrapResult,
    GroupEstimate,
    GroupInterval,
    RecencyRule,
    aggregate_groups,
    bootstrap_groups,
    merge_empty_cells,
    overall_estimate,
    predict,
)
from .likelihood import (
    AggregateLikelihood,
    cell_positive_probability,
    linear_predictor,
    logit,
    predict_probabilities,
    sigmoid,
)
from .selection import (
    PooledFit,
    StepwiseResult,
    impute_datasets,
    pool_fits,
    select_and_fit,
    stepwise,
)
from .simulation import (
    ColumnSpec,
    StudyConfig,
    StudyResult,
    TruthSpec,
    categorical_probabilities,
    expected_table,
    joint_cell_proportions,
    mean_absolute_error,
    run_study,
    sampled_coefficients,
    simulate_table,
    synthetic_dataset,
    true_coefficients,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateLikelihood",
    "BootstrapResult",
    "Cell",
    "CellPartition",
    "ColumnSpec",
    "ContingencyTable",
    "CtlogitError",
    "FitResult",
    "GroupEstimate",
    "GroupInterval",
    "IndividualDataset",
    "Interval",
    "MarginalTarget",
    "NumericalFailure",
    "PooledFit",
    "RecencyRule",
    "StepwiseResult",
    "StudyConfig",
    "StudyResult",
    "TruthSpec",
    "ValidationFailure",
    "ValidationReport",
    "aggregate_groups",
    "assign_cells",
    "banded_partition",
    "bootstrap_groups",
    "calibrate_intercept",
    "categorical_probabilities",
    "cell_positive_probability",
    "check_identifiability",
    "coverage_gaps",
    "crossed_partition",
    "expected_table",
    "fit_model",
    "impute_datasets",
    "joint_cell_proportions",
    "linear_predictor",
    "logit",
    "mean_absolute_error",
    "merge_empty_cells",
    "overall_estimate",
    "pool_fits",
    "predict",
    "predict_probabilities",
    "run_study",
    "sampled_coefficients",
    "select_and_fit",
    "sigmoid",
    "simulate_table",
    "solve_intercept_for_marginal",
    "solve_offset",
    "stepwise",
    "synthetic_dataset",
    "true_coefficients",
    "validate_partition",
]
