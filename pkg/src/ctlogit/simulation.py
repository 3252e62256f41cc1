"""Synthetic data, table generation, and the model-vs-rule study harness.

A study fixes a population (an individual-level dataset plus true slopes
and a true marginal), repeatedly draws a contingency table from the
implied cell-level multinomial, fits the model to each draw, and compares
its row-level predictions against a purely categorical alternative that
assigns every row its cell's empirical positive share. Accuracy is mean
absolute error against the true row probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import CellPartition, ContingencyTable, IndividualDataset, assign_cells
from .errors import NumericalFailure, TooManyFailedReplicates, ValidationFailure
from .estimation import fit_model, solve_intercept_for_marginal, solve_offset
from .inference import predict
from .likelihood import cell_positive_probability, predict_probabilities, sigmoid
from .rng import TAG_SIMULATION, TAG_SYNTHETIC, substream

MAX_FAILED_SHARE = 0.10


# -- synthetic populations ---------------------------------------------------


@dataclass(frozen=True)
class ColumnSpec:
    """One synthetic covariate: distribution family and its parameters."""

    name: str
    kind: str
    params: tuple

    def draw(self, n: int, rng) -> np.ndarray:
        if self.kind == "gamma":
            shape, scale = self.params
            return rng.gamma(shape, scale, n)
        if self.kind == "normal":
            mean, sd = self.params
            return rng.normal(mean, sd, n)
        if self.kind == "lognormal":
            mean, sigma = self.params
            return rng.lognormal(mean, sigma, n)
        if self.kind == "bernoulli":
            (q,) = self.params
            return (rng.random(n) < q).astype(float)
        raise ValidationFailure(f"unknown column kind '{self.kind}'")


DEFAULT_COLUMNS = (
    ColumnSpec("odn", "gamma", (2.0, 1.5)),
    ColumnSpec("log_vl", "normal", (8.0, 2.0)),
    ColumnSpec("noise", "normal", (0.0, 1.0)),
)


def synthetic_dataset(
    n: int,
    seed: int,
    columns=DEFAULT_COLUMNS,
    group_schemes: dict | None = None,
    weight_sigma: float = 0.5,
    missing: dict | None = None,
) -> IndividualDataset:
    """Draw an individual-level dataset from per-column distributions.

    ``group_schemes`` maps a scheme name to a list of labels assigned
    uniformly at random. ``missing`` maps a covariate name to a number of
    entries to blank out; those covariates are marked imputable.
    """
    rng = substream(seed, TAG_SYNTHETIC)
    values = np.column_stack([c.draw(n, rng) for c in columns])
    weights = rng.lognormal(0.0, weight_sigma, n)
    groups = {
        scheme: rng.choice(np.array(labels, dtype=object), n)
        for scheme, labels in (group_schemes or {}).items()
    }
    names = [c.name for c in columns]
    missing = missing or {}
    for col, count in missing.items():
        j = names.index(col)
        rows = rng.choice(n, size=count, replace=False)
        values[rows, j] = np.nan
    return IndividualDataset(
        names, values, weights, group_labels=groups, imputable=tuple(missing)
    )


# -- truth and table generation ----------------------------------------------


@dataclass(frozen=True)
class TruthSpec:
    """True slopes over named covariates plus the true marginal; the true
    intercept is whatever makes the weighted mean prediction hit ``p1`` on
    a given population."""

    covariates: tuple
    slopes: tuple
    p1: float


def true_coefficients(truth: TruthSpec, dataset: IndividualDataset) -> np.ndarray:
    """Intercept-first true coefficient vector on this population."""
    X = dataset.design(truth.covariates)
    slopes = np.asarray(truth.slopes, dtype=float)
    beta0 = solve_intercept_for_marginal(slopes, X, dataset.weights, truth.p1)
    return np.concatenate(([beta0], slopes))


def sampled_coefficients(
    truth: TruthSpec, dataset: IndividualDataset, sample_p1: float
) -> np.ndarray:
    """Same slopes, intercept shifted to the labeled sample's marginal.

    Labeled counts typically come from a case-enriched sample; tables are
    generated under this vector while accuracy is judged under the true
    one.
    """
    X = dataset.design(truth.covariates)
    slopes = np.asarray(truth.slopes, dtype=float)
    beta0 = solve_intercept_for_marginal(slopes, X, dataset.weights, sample_p1)
    return np.concatenate(([beta0], slopes))


def joint_cell_proportions(
    beta: np.ndarray, dataset: IndividualDataset, partition: CellPartition, covariates
) -> tuple[np.ndarray, np.ndarray]:
    """P(label, cell) over the 2K categories implied by the model.

    Row contributions are weight times predicted probability; the two
    returned arrays (positive, negative) sum to one jointly.
    """
    assignment = assign_cells(partition, dataset)
    probs = predict_probabilities(beta, dataset.design(covariates))
    w = dataset.weights
    p1k = np.bincount(assignment, weights=w * probs, minlength=partition.n_cells)
    p0k = np.bincount(assignment, weights=w * (1.0 - probs), minlength=partition.n_cells)
    return p1k, p0k


def expected_table(
    beta: np.ndarray,
    dataset: IndividualDataset,
    partition: CellPartition,
    covariates,
    m: float,
    name: str = "expected",
) -> ContingencyTable:
    """Noiseless table: counts are m times the joint proportions."""
    p1k, p0k = joint_cell_proportions(beta, dataset, partition, covariates)
    return ContingencyTable(partition, m * p1k, m * p0k, name=name)


def simulate_table(
    beta: np.ndarray,
    dataset: IndividualDataset,
    partition: CellPartition,
    covariates,
    m: int,
    rng,
    name: str = "simulated",
) -> ContingencyTable:
    """One multinomial draw of m labeled individuals across the 2K
    label-by-cell categories."""
    p1k, p0k = joint_cell_proportions(beta, dataset, partition, covariates)
    probs = np.concatenate([p1k, p0k])
    counts = rng.multinomial(m, probs / probs.sum())
    K = partition.n_cells
    return ContingencyTable(partition, counts[:K].astype(float), counts[K:].astype(float), name=name)


# -- categorical alternative -------------------------------------------------


def categorical_probabilities(
    dataset: IndividualDataset, table: ContingencyTable, p1: float
) -> np.ndarray:
    """Cell-share predictions with a marginal-matching logit shift.

    Every row gets its cell's empirical positive share m1/(m1+m0) (one half
    for cells with no counts at all), mapped to the logit scale, shifted by
    a common constant until the weighted mean matches ``p1``, and mapped
    back. Cells whose share is exactly zero or one stay pinned there for
    any finite shift; that stiffness is the point of comparison with the
    model-based fit.
    """
    assignment = assign_cells(table.partition, dataset)
    total = table.counts1 + table.counts0
    share = np.where(total > 0, table.counts1 / np.maximum(total, 1.0), 0.5)
    with np.errstate(divide="ignore"):
        cell_logits = np.log(share) - np.log1p(-share)
    base = cell_logits[assignment]
    shift = solve_offset(base, dataset.weights, p1)
    return sigmoid(base + shift)


def mean_absolute_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Unweighted mean absolute difference between probability vectors."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValidationFailure("probability vectors must have matching shape")
    return float(np.mean(np.abs(estimate - truth)))


# -- replicated study --------------------------------------------------------


@dataclass
class StudyConfig:
    truth: TruthSpec
    partition: CellPartition
    sample_p1: float
    table_size: int
    replicates: int
    seed: int
    fit_kwargs: dict = field(default_factory=dict)


@dataclass
class StudyResult:
    mae_model: np.ndarray
    mae_categorical: np.ndarray
    failed_model: int
    failed_categorical: int

    def _good(self) -> np.ndarray:
        return ~np.isnan(self.mae_model) & ~np.isnan(self.mae_categorical)

    @property
    def model_mean(self) -> float:
        return float(np.nanmean(self.mae_model))

    @property
    def model_sd(self) -> float:
        return float(np.nanstd(self.mae_model, ddof=1))

    @property
    def categorical_mean(self) -> float:
        return float(np.nanmean(self.mae_categorical))

    @property
    def categorical_sd(self) -> float:
        return float(np.nanstd(self.mae_categorical, ddof=1))

    @property
    def share_model_better(self) -> float:
        good = self._good()
        return float(np.mean(self.mae_model[good] < self.mae_categorical[good]))

    @property
    def mean_gap(self) -> float:
        return self.categorical_mean - self.model_mean


def run_study(dataset: IndividualDataset, config: StudyConfig) -> StudyResult:
    """Replicate table draws and score both estimators against the truth.

    Each replicate draws its table from an independent seeded stream, so
    any single replicate can be reproduced alone. Model fits that fail are
    recorded as NaN; more than a 10% model failure rate aborts the study.
    """
    truth_beta = true_coefficients(config.truth, dataset)
    gen_beta = sampled_coefficients(config.truth, dataset, config.sample_p1)
    truth_probs = predict_probabilities(truth_beta, dataset.design(config.truth.covariates))

    R = config.replicates
    mae_model = np.full(R, np.nan)
    mae_cat = np.full(R, np.nan)
    failed_model = failed_cat = 0
    max_failed = int(np.floor(MAX_FAILED_SHARE * R))

    def check_abort(r):
        if failed_model > max_failed:
            raise TooManyFailedReplicates(
                f"{failed_model} of {r + 1} model fits failed "
                f"(tolerated: {max_failed} of {R})"
            ) from None

    for r in range(R):
        rng = substream(config.seed, TAG_SIMULATION, r)
        try:
            table = simulate_table(
                gen_beta,
                dataset,
                config.partition,
                config.truth.covariates,
                config.table_size,
                rng,
            )
        except ValidationFailure:
            failed_model += 1
            failed_cat += 1
            check_abort(r)
            continue
        try:
            fit = fit_model(
                dataset,
                [table],
                config.truth.covariates,
                p1=config.truth.p1,
                compute_covariance=False,
                **config.fit_kwargs,
            )
            if not fit.converged:
                raise NumericalFailure("replicate model fit did not converge")
            mae_model[r] = mean_absolute_error(predict(fit, dataset), truth_probs)
        except NumericalFailure:
            failed_model += 1
            check_abort(r)
        try:
            alt = categorical_probabilities(dataset, table, config.truth.p1)
            mae_cat[r] = mean_absolute_error(alt, truth_probs)
        except NumericalFailure:
            failed_cat += 1
    return StudyResult(mae_model, mae_cat, failed_model, failed_cat)
