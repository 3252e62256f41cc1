"""Prediction, group-level aggregation, and bootstrap intervals.

Group estimates are weighted means of row-level predicted probabilities
within each group. Uncertainty comes from a nonparametric bootstrap over
dataset rows: tables are treated as fixed external information, the
selected covariate set is kept as given, and each replicate refits the
coefficients on resampled rows. Resampling can leave table cells without
rows; such cells are merged into an adjacent cell before refitting so
every replicate scores the same total count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import ContingencyTable, IndividualDataset
from .errors import (
    EmptyCell,
    EmptyGroup,
    FailedFitWarning,
    MissingCovariateAtPredict,
    NumericalFailure,
    TooManyFailedReplicates,
    ValidationFailure,
)
from .estimation import FitResult, calibrate_intercept, fit_likelihood
from .likelihood import AggregateLikelihood, TablePart, predict_probabilities
from .rng import TAG_BOOTSTRAP, substream

MAX_FAILED_SHARE = 0.10
CI_LEVELS = (0.025, 0.975)


def predict(fit: FitResult, dataset: IndividualDataset) -> np.ndarray:
    """Row-level predicted probabilities under a fitted model."""
    X = dataset.design(fit.covariates)
    if np.any(np.isnan(X)):
        bad = [c for c in fit.covariates if np.any(np.isnan(dataset.column(c)))]
        raise MissingCovariateAtPredict(
            f"cannot predict with missing values in: {', '.join(bad)}"
        )
    return predict_probabilities(fit.beta, X)


# -- rule-based recency classification ---------------------------------------


@dataclass(frozen=True)
class RecencyRule:
    """Assay-based recent-infection rule: recent when the normalized optical
    density is at or below ``odn_threshold`` and viral load is at or above
    ``vl_threshold``. ``vl_scale`` says how viral load is stored: "raw"
    copies/mL, or "log" for natural-log copies/mL (back-transformed before
    comparison)."""

    odn: str
    vl: str
    vl_scale: str = "raw"
    odn_threshold: float = 1.5
    vl_threshold: float = 1000.0

    def __post_init__(self):
        if self.vl_scale not in ("raw", "log"):
            raise ValidationFailure(f"vl_scale must be 'raw' or 'log', got '{self.vl_scale}'")

    def classify(self, dataset: IndividualDataset) -> np.ndarray:
        odn = dataset.column(self.odn)
        vl = dataset.column(self.vl)
        if np.any(np.isnan(odn)) or np.any(np.isnan(vl)):
            raise MissingCovariateAtPredict(
                "recency rule covariates must be fully observed"
            )
        if self.vl_scale == "log":
            vl = np.exp(vl)
        return (odn <= self.odn_threshold) & (vl >= self.vl_threshold)


# -- group aggregation -------------------------------------------------------


@dataclass
class GroupEstimate:
    label: str
    n: int
    weight_share: float
    probability: float
    recent_share: float | None = None


def aggregate_groups(
    dataset: IndividualDataset,
    probabilities: np.ndarray,
    scheme: str,
    recent: np.ndarray | None = None,
) -> list[GroupEstimate]:
    """Weighted mean probability per group, labels in sorted order.

    ``recent`` is an optional boolean row vector whose weighted share is
    reported alongside, for comparing the model against a binary rule.
    """
    if scheme not in dataset.group_labels:
        raise EmptyGroup(f"group scheme '{scheme}' not present in dataset")
    probabilities = np.asarray(probabilities, dtype=float)
    if probabilities.shape != (dataset.n,):
        raise ValidationFailure("probabilities length must match the number of rows")
    labels = dataset.group_labels[scheme]
    w = dataset.weights
    out = []
    for label in sorted({str(v) for v in labels}):
        mask = np.array([str(v) == label for v in labels])
        wg = float(w[mask].sum())
        est = GroupEstimate(
            label=label,
            n=int(mask.sum()),
            weight_share=wg,
            probability=float(w[mask] @ probabilities[mask] / wg),
        )
        if recent is not None:
            est.recent_share = float(w[mask] @ recent[mask].astype(float) / wg)
        out.append(est)
    return out


def overall_estimate(
    dataset: IndividualDataset, probabilities: np.ndarray, recent: np.ndarray | None = None
) -> GroupEstimate:
    w = dataset.weights
    est = GroupEstimate(
        label="overall",
        n=dataset.n,
        weight_share=1.0,
        probability=float(w @ probabilities),
    )
    if recent is not None:
        est.recent_share = float(w @ recent.astype(float))
    return est


# -- adjacent-cell merging for resampled tables ------------------------------


def _axis0_neighbors(table: ContingencyTable, lower: bool) -> list[list[int]]:
    """neighbors[k]: cells adjacent to k across its axis-0 lower (or upper)
    boundary, i.e. sharing that finite boundary value and overlapping k on
    every other axis."""
    cells = table.partition.cells
    out = []
    for k, cell in enumerate(cells):
        bound = cell.bounds[0].lo if lower else cell.bounds[0].hi
        adj = []
        if np.isfinite(bound):
            for j, other in enumerate(cells):
                if j == k:
                    continue
                touching = (other.bounds[0].hi == bound) if lower else (other.bounds[0].lo == bound)
                if touching and all(
                    a.intersects(b) for a, b in zip(cell.bounds[1:], other.bounds[1:])
                ):
                    adj.append(j)
        out.append(adj)
    return out


@dataclass
class MergedTable:
    """Partition cells coalesced into groups, with summed counts.

    ``groups`` lists original cell indices per merged group; ``remap`` sends
    an original cell index to its group. Total counts are conserved.
    """

    table: ContingencyTable
    groups: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def __post_init__(self):
        if not self.groups:
            self.groups = [[k] for k in range(self.table.partition.n_cells)]

    @property
    def remap(self) -> np.ndarray:
        m = np.empty(self.table.partition.n_cells, dtype=np.int64)
        for g, members in enumerate(self.groups):
            m[members] = g
        return m

    def part(self, assignment: np.ndarray) -> TablePart:
        remap = self.remap
        c1 = np.array([self.table.counts1[g].sum() for g in self.groups])
        c0 = np.array([self.table.counts0[g].sum() for g in self.groups])
        names = [
            " + ".join(self.table.partition.describe_cell(k) for k in g) for g in self.groups
        ]
        return TablePart(
            name=self.table.name,
            counts1=c1,
            counts0=c0,
            assignment=remap[assignment],
            n_cells=len(self.groups),
            cell_names=names,
        )


def merge_empty_cells(
    table: ContingencyTable, assignment: np.ndarray, occupancy_rows: np.ndarray
) -> MergedTable:
    """Coalesce cells until every group holds at least one row.

    ``occupancy_rows`` are the (possibly resampled) row indices present;
    a group is empty when none of its cells contains any of them. An empty
    group merges with the neighbor across its finite axis-0 lower boundary
    when one exists, otherwise across its upper boundary; with several
    touching neighbors the one holding the lowest original cell index wins.
    """
    lower_adj = _axis0_neighbors(table, lower=True)
    upper_adj = _axis0_neighbors(table, lower=False)
    merged = MergedTable(table)
    counts = np.bincount(
        assignment[occupancy_rows], minlength=table.partition.n_cells
    )

    def group_occupancy():
        return [int(sum(counts[k] for k in g)) for g in merged.groups]

    while True:
        occ = group_occupancy()
        empties = [g for g, c in enumerate(occ) if c == 0]
        if not empties:
            return merged
        if len(merged.groups) == 1:
            raise EmptyCell(
                f"table '{table.name}': no rows fall in any cell; cannot merge further"
            )
        # Lowest-indexed empty group first keeps the walk deterministic.
        g = min(empties, key=lambda gi: min(merged.groups[gi]))
        members = set(merged.groups[g])
        candidates = []
        for adj in (lower_adj, upper_adj):
            touching = sorted(
                {j for k in members for j in adj[k] if j not in members}
            )
            if touching:
                candidates = touching
                break
        if not candidates:
            raise EmptyCell(
                f"table '{table.name}': empty cell group {sorted(members)} has no "
                "adjacent group to merge with"
            )
        target_cell = candidates[0]
        h = next(i for i, grp in enumerate(merged.groups) if target_cell in grp)
        merged.events.append(
            f"table '{table.name}': merged empty cells {sorted(members)} into "
            f"group {sorted(merged.groups[h])}"
        )
        keep = min(g, h)
        merged.groups[keep] = sorted(merged.groups[g] + merged.groups[h])
        del merged.groups[max(g, h)]


# -- bootstrap ---------------------------------------------------------------


@dataclass
class GroupInterval:
    label: str
    estimate: float
    lower: float
    upper: float
    n_replicates: int


@dataclass
class BootstrapResult:
    scheme: str | None
    groups: list
    overall: GroupInterval
    replicates: int
    failed: int
    merge_events: list


def bootstrap_groups(
    dataset: IndividualDataset,
    tables: list[ContingencyTable],
    fit: FitResult,
    B: int,
    seed: int,
    scheme: str | None = None,
    recency: RecencyRule | None = None,
    **fit_kwargs,
) -> BootstrapResult:
    """Percentile intervals for overall and per-group mean probabilities.

    Rows are resampled uniformly with replacement, B times; weights are
    renormalized within each replicate and the tables are held fixed. Each
    replicate refits the given covariate set (no reselection) starting from
    the full-data optimum, recalibrates when the original fit was
    calibrated, predicts, and aggregates. Replicates whose fit fails or
    does not converge are dropped; more than a 10% drop rate aborts.
    """
    full_probs = predict(fit, dataset)
    recent = recency.classify(dataset) if recency is not None else None
    point_overall = overall_estimate(dataset, full_probs, recent)
    point_groups = (
        aggregate_groups(dataset, full_probs, scheme, recent) if scheme is not None else []
    )
    labels = [g.label for g in point_groups]

    X_full = dataset.design(fit.covariates)
    if np.any(np.isnan(X_full)):
        raise ValidationFailure(
            "bootstrap requires the model covariates to be fully observed; "
            "complete the dataset first"
        )
    assignments = [TablePart.from_table(t, dataset).assignment for t in tables]
    group_rows = {}
    if scheme is not None:
        lab = dataset.group_labels[scheme]
        for label in labels:
            group_rows[label] = np.array([str(v) == label for v in lab])

    fit_kwargs.setdefault("restarts", 0)
    fit_kwargs.setdefault("compute_covariance", False)
    warm = np.concatenate(([fit.beta0_uncalibrated], fit.beta[1:]))

    draws_overall = np.full(B, np.nan)
    draws_groups = {label: np.full(B, np.nan) for label in labels}
    merge_events: list = []
    failed = 0
    max_failed = int(np.floor(MAX_FAILED_SHARE * B))

    for r in range(B):
        rng = substream(seed, TAG_BOOTSTRAP, r)
        rows = rng.integers(0, dataset.n, dataset.n)
        w = dataset.weights[rows]
        w = w / w.sum()
        try:
            parts = []
            for table, assignment in zip(tables, assignments):
                merged = merge_empty_cells(table, assignment, rows)
                merge_events.extend(merged.events)
                parts.append(merged.part(assignment[rows]))
            lik = AggregateLikelihood.from_parts(
                X_full[rows], w, parts, covariates=fit.covariates
            )
            rfit = fit_likelihood(lik, start=warm, **fit_kwargs)
            if not rfit.converged:
                raise NumericalFailure("replicate fit did not converge")
            beta = rfit.beta
            if fit.p1 is not None:
                beta = calibrate_intercept(beta, lik.X, w, fit.p1)
            probs = predict_probabilities(beta, lik.X)
        except NumericalFailure as exc:
            failed += 1
            warnings.warn(f"replicate {r} dropped: {exc}", FailedFitWarning, stacklevel=2)
            if failed > max_failed:
                raise TooManyFailedReplicates(
                    f"{failed} of {r + 1} bootstrap replicates failed "
                    f"(tolerated: {max_failed} of {B})"
                ) from exc
            continue
        draws_overall[r] = float(w @ probs)
        for label in labels:
            mask = group_rows[label][rows]
            wg = float(w[mask].sum())
            if wg > 0:
                draws_groups[label][r] = float(w[mask] @ probs[mask] / wg)

    def interval(point: float, draws: np.ndarray, label: str) -> GroupInterval:
        good = draws[~np.isnan(draws)]
        lo, hi = np.quantile(good, CI_LEVELS, method="linear")
        return GroupInterval(label, point, float(lo), float(hi), int(good.size))

    return BootstrapResult(
        scheme=scheme,
        groups=[
            interval(g.probability, draws_groups[g.label], g.label) for g in point_groups
        ],
        overall=interval(point_overall.probability, draws_overall, "overall"),
        replicates=B,
        failed=failed,
        merge_events=merge_events,
    )
