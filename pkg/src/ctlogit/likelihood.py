"""Aggregate-count likelihood for an individual-level logistic model.

The model is a plain logistic regression for each row, but no row carries a
label. Supervision instead comes from contingency tables: per-cell counts
of positive and negative labels over a partition of one or two covariates.
Each cell's positive-class probability is approximated by the weighted mean
of the row-level predictions inside it, and the counts are scored against
those cell probabilities as a product of per-table multinomials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ContingencyTable, IndividualDataset, assign_cells
from .errors import DegenerateCellProbability, ValidationFailure

PROB_FLOOR = 1e-300
PROB_CEIL = 1.0 - 1e-300


def sigmoid(z):
    """Overflow-safe logistic function, elementwise."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def logit(p: float) -> float:
    if not (0.0 < p < 1.0):
        raise ValidationFailure(f"logit argument must lie in (0,1), got {p}")
    return float(np.log(p / (1.0 - p)))


def linear_predictor(beta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """beta[0] + X @ beta[1:], for an intercept-first coefficient vector."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (X.shape[1] + 1,):
        raise ValidationFailure(
            f"coefficient vector has length {beta.shape[0]}, design implies {X.shape[1] + 1}"
        )
    return beta[0] + X @ beta[1:]


def predict_probabilities(beta: np.ndarray, X: np.ndarray) -> np.ndarray:
    return sigmoid(linear_predictor(beta, X))


def cell_positive_probability(
    probs: np.ndarray, weights: np.ndarray, assignment: np.ndarray, n_cells: int
) -> np.ndarray:
    """Weighted mean of row probabilities per cell.

    The negative-class value is defined as one minus this, so the two always
    sum to one exactly. Cells holding no rows get NaN; the likelihood
    rejects them separately rather than hiding them behind a clamp.
    """
    wp = np.bincount(assignment, weights=weights * probs, minlength=n_cells)
    w = np.bincount(assignment, weights=weights, minlength=n_cells)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(w > 0, wp / np.where(w > 0, w, 1.0), np.nan)


@dataclass
class TablePart:
    """One table reduced to what the likelihood needs: counts per cell and
    each row's cell index. Merged or synthetic cell structures plug in here
    without carrying any box geometry."""

    name: str
    counts1: np.ndarray
    counts0: np.ndarray
    assignment: np.ndarray
    n_cells: int
    cell_names: list

    @classmethod
    def from_table(cls, table: ContingencyTable, dataset: IndividualDataset) -> "TablePart":
        return cls(
            name=table.name,
            counts1=table.counts1,
            counts0=table.counts0,
            assignment=assign_cells(table.partition, dataset),
            n_cells=table.partition.n_cells,
            cell_names=[table.partition.describe_cell(k) for k in range(table.partition.n_cells)],
        )

    @property
    def total_count(self) -> float:
        return float(self.counts1.sum() + self.counts0.sum())


class AggregateLikelihood:
    """Log-likelihood of contingency-table counts under row-level logits.

    Binds a complete-case design matrix and one or more tables; cell
    assignments are computed once at construction. Instances are the
    objective handed to the optimizer (via :meth:`negative`) and keep a
    cumulative ``clamp_events`` counter so degenerate probability regions
    visited during optimization are observable.
    """

    def __init__(
        self,
        dataset: IndividualDataset,
        tables: list[ContingencyTable],
        covariates: tuple[str, ...],
    ):
        if not tables:
            raise ValidationFailure("at least one contingency table is required")
        self.covariates = tuple(covariates)
        X = dataset.design(self.covariates)
        if np.any(np.isnan(X)):
            bad = [c for c in self.covariates if np.any(np.isnan(dataset.column(c)))]
            raise ValidationFailure(
                f"model covariates with missing values: {', '.join(bad)}; impute before fitting"
            )
        parts = [TablePart.from_table(t, dataset) for t in tables]
        self._bind(X, dataset.weights, parts)

    def _bind(self, X, weights, parts):
        self.X = X
        self.weights = weights
        self.parts = parts
        self.n_coefficients = 1 + X.shape[1]
        self.clamp_events = 0

    @classmethod
    def from_parts(
        cls, X: np.ndarray, weights: np.ndarray, parts: list[TablePart], covariates=()
    ) -> "AggregateLikelihood":
        """Bypass geometry: counts and assignments supplied directly."""
        obj = cls.__new__(cls)
        obj.covariates = tuple(covariates)
        obj._bind(np.asarray(X, dtype=float), np.asarray(weights, dtype=float), list(parts))
        return obj

    @property
    def total_count(self) -> float:
        return sum(p.total_count for p in self.parts)

    def cell_values(self, beta: np.ndarray) -> list[np.ndarray]:
        """Per-table arrays of cell positive-class probabilities."""
        probs = predict_probabilities(beta, self.X)
        return [
            cell_positive_probability(probs, self.weights, p.assignment, p.n_cells)
            for p in self.parts
        ]

    def log_likelihood(self, beta: np.ndarray) -> float:
        total = 0.0
        for part, v1 in zip(self.parts, self.cell_values(beta)):
            if np.any(np.isnan(v1)):
                k = int(np.argmax(np.isnan(v1)))
                raise ValidationFailure(
                    f"table '{part.name}': cell {k} holds no dataset rows, "
                    "its probability is undefined; merge or drop the cell"
                )
            v0 = 1.0 - v1
            c1 = np.clip(v1, PROB_FLOOR, PROB_CEIL)
            c0 = np.clip(v0, PROB_FLOOR, PROB_CEIL)
            self.clamp_events += int(np.count_nonzero(c1 != v1) + np.count_nonzero(c0 != v0))
            total += float(part.counts1 @ np.log(c1) + part.counts0 @ np.log(c0))
        return total

    def negative(self, beta: np.ndarray) -> float:
        return -self.log_likelihood(beta)

    def check_degenerate(self, beta: np.ndarray) -> None:
        """Raise if, at the given optimum, a cell with a positive count has
        probability pinned to the clamp boundary for that label."""
        for part, v1 in zip(self.parts, self.cell_values(beta)):
            v0 = 1.0 - v1
            deg1 = (v1 <= PROB_FLOOR) & (part.counts1 > 0)
            deg0 = (v0 <= PROB_FLOOR) & (part.counts0 > 0)
            if np.any(deg1 | deg0):
                k = int(np.argmax(deg1 | deg0))
                label = 1 if deg1[k] else 0
                raise DegenerateCellProbability(
                    f"table '{part.name}': cell {k} ({part.cell_names[k]}) has "
                    f"probability 0 for label {label} at the optimum despite a positive count"
                )
