"""Exception hierarchy and warning categories.

Two error families map onto the CLI exit-code contract: input or
structural problems (exit 1) and numerical failures during estimation
(exit 2). Everything raised by this package derives from CtlogitError.
"""


class CtlogitError(Exception):
    """Base class for all errors raised by ctlogit."""


class ValidationFailure(CtlogitError):
    """Invalid input data, file, partition, or configuration (CLI exit 1)."""


class NumericalFailure(CtlogitError):
    """Estimation-time numerical breakdown (CLI exit 2)."""


# -- input / structural ------------------------------------------------------

class UnknownCovariate(ValidationFailure):
    """A referenced covariate name does not exist in the dataset."""


class MissingTableCovariateValue(ValidationFailure):
    """A table covariate contains missing values; table covariates must be
    fully observed."""


class RowOutsidePartition(ValidationFailure):
    """A dataset row falls in no cell of a partition (coverage violation or
    a value sitting exactly on an open boundary owned by no cell)."""


class PartitionInvalid(ValidationFailure):
    """Cells overlap or fail to cover the table-covariate space."""


class NegativeCount(ValidationFailure):
    """A contingency-table cell count is negative."""


class ParseError(ValidationFailure):
    """A data or table file could not be parsed."""


class NonPositiveWeight(ValidationFailure):
    """A sampling weight is zero or negative."""


class DuplicateColumn(ValidationFailure):
    """A delimited file declares the same column name twice."""


class MissingCovariateAtPredict(ValidationFailure):
    """Prediction or classification needs a covariate the dataset does not
    provide (or provides with missing values)."""


class InsufficientCompleteRows(ValidationFailure):
    """Too few complete rows to fit the imputation model."""


class InconsistentDesigns(ValidationFailure):
    """Per-imputation refits disagree on the covariate set and cannot be
    pooled."""


class LengthMismatch(ValidationFailure):
    """Two paired vectors have different lengths."""


class ConfigError(ValidationFailure):
    """Bad run configuration (missing file, out-of-range value, ...)."""


class EmptyGroup(ValidationFailure):
    """A grouping level contains no rows."""


# -- numerical ---------------------------------------------------------------

class EmptyCell(NumericalFailure):
    """A table cell holds zero dataset weight, so its conditional probability
    is undefined. Merge the cell with a neighbour (see the bootstrap merge
    rule) or supply a dataset that occupies every cell."""


class DegenerateCellProbability(NumericalFailure):
    """A cell probability reached exactly 0 or 1 while the opposing count is
    positive; the coefficients are saturated."""


class SingularHessian(NumericalFailure):
    """The finite-difference Hessian could not be inverted."""

    def __init__(self, message: str, condition_number: float = float("inf")):
        super().__init__(message)
        self.condition_number = condition_number


class BracketFailure(NumericalFailure):
    """Intercept calibration could not bracket the target mean."""


class TooManyFailedReplicates(NumericalFailure):
    """More than the tolerated share of bootstrap or study replicates failed
    to converge."""


# -- warnings ----------------------------------------------------------------

class IdentifiabilityWarning(UserWarning):
    """The table provides fewer degrees of freedom than coefficients."""


class NonNegativeDefiniteViolation(UserWarning):
    """The inverse negative Hessian has a non-positive diagonal entry."""


class EmptyCellWarning(UserWarning):
    """A partition cell contains no dataset rows."""


class FailedFitWarning(UserWarning):
    """A candidate or replicate fit failed and was skipped."""
