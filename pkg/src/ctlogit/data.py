"""Core domain types: datasets, cell geometry, contingency tables, fits.

All types here are immutable after construction (ndarray buffers are set
read-only) and safe to share across threads. Structural validation happens
at construction; geometric validation of partitions (disjointness,
coverage, occupancy) lives in :func:`validate_partition` so that malformed
inputs can be reported rather than half-constructed.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyCellWarning,
    IdentifiabilityWarning,
    MissingTableCovariateValue,
    NegativeCount,
    NonPositiveWeight,
    RowOutsidePartition,
    UnknownCovariate,
    ValidationFailure,
)

WEIGHT_SUM_TOL = 1e-12

# Coverage probing: grid resolution per axis and the relative extension
# applied beyond the observed range.
COVERAGE_GRID_POINTS = 50
COVERAGE_RANGE_EXTENSION = 0.10


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Interval:
    """One axis of a box: (lo, hi) with explicit endpoint conventions.

    ``lo_open`` and ``hi_closed`` carry the two conventions the shipped
    tables mix: assay intervals are lower-open/upper-closed, viral-load
    intervals lower-closed/upper-open. Infinite bounds are allowed.
    """

    lo: float
    hi: float
    lo_open: bool = True
    hi_closed: bool = True

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValidationFailure(f"interval has lo={self.lo} > hi={self.hi}")
        if self.lo == self.hi and (self.lo_open or not self.hi_closed):
            raise ValidationFailure(f"degenerate interval [{self.lo}, {self.hi}] excludes its only point")

    def contains(self, x):
        """Vectorized membership test; ``x`` may be scalar or ndarray."""
        x = np.asarray(x)
        lower = (x > self.lo) if self.lo_open else (x >= self.lo)
        upper = (x <= self.hi) if self.hi_closed else (x < self.hi)
        return lower & upper

    def intersects(self, other: "Interval") -> bool:
        """True when the two intervals share at least one point."""
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo > hi:
            return False
        if lo < hi:
            return True
        # Single candidate point: it must be attainable from both sides.
        at_lo_ok = all(
            (not iv.lo_open) if iv.lo == lo else True for iv in (self, other)
        )
        at_hi_ok = all(
            iv.hi_closed if iv.hi == lo else True for iv in (self, other)
        )
        return at_lo_ok and at_hi_ok

    def describe(self) -> str:
        lb = "(" if self.lo_open else "["
        rb = "]" if self.hi_closed else ")"
        return f"{lb}{self.lo:g},{self.hi:g}{rb}"


@dataclass(frozen=True)
class Cell:
    """An axis-aligned box: one Interval per table covariate."""

    bounds: tuple[Interval, ...]

    def contains_rows(self, columns: tuple[np.ndarray, ...]) -> np.ndarray:
        mask = np.ones(columns[0].shape, dtype=bool)
        for iv, col in zip(self.bounds, columns):
            mask &= iv.contains(col)
        return mask

    def describe(self, names: tuple[str, ...]) -> str:
        return " x ".join(f"{n} {iv.describe()}" for n, iv in zip(names, self.bounds))


@dataclass(frozen=True)
class CellPartition:
    """K axis-aligned boxes over the table covariates.

    A valid partition is pairwise disjoint and covers the table-covariate
    space; both properties are checked by :func:`validate_partition`, not at
    construction. A box may span the entire range of a covariate (the
    bivariate table's last row does this for viral load).
    """

    table_covariates: tuple[str, ...]
    cells: tuple[Cell, ...]

    def __post_init__(self):
        if len(self.table_covariates) == 0:
            raise ValidationFailure("partition needs at least one table covariate")
        if len(set(self.table_covariates)) != len(self.table_covariates):
            raise ValidationFailure("duplicate table covariate in partition")
        if len(self.cells) == 0:
            raise ValidationFailure("partition needs at least one cell")
        r = len(self.table_covariates)
        for i, cell in enumerate(self.cells):
            if len(cell.bounds) != r:
                raise ValidationFailure(f"cell {i} has {len(cell.bounds)} bounds, expected {r}")

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def describe_cell(self, k: int) -> str:
        return self.cells[k].describe(self.table_covariates)

    def overlapping_pairs(self) -> list[tuple[int, int]]:
        """Pairs of cells whose boxes share at least one point."""
        pairs = []
        for i, j in itertools.combinations(range(self.n_cells), 2):
            a, b = self.cells[i], self.cells[j]
            if all(ia.intersects(ib) for ia, ib in zip(a.bounds, b.bounds)):
                pairs.append((i, j))
        return pairs


@dataclass(frozen=True)
class ContingencyTable:
    """Per-cell labeled counts bound to a partition.

    Counts may be non-integer (they are typically derived rather than
    directly observed) but must be non-negative, with a positive total for
    each label.
    """

    partition: CellPartition
    counts1: np.ndarray
    counts0: np.ndarray
    name: str = "table"

    def __post_init__(self):
        c1 = np.asarray(self.counts1, dtype=float)
        c0 = np.asarray(self.counts0, dtype=float)
        K = self.partition.n_cells
        if c1.shape != (K,) or c0.shape != (K,):
            raise ValidationFailure(
                f"table '{self.name}': counts must have length {K}, got {c1.shape} / {c0.shape}"
            )
        if np.any(c1 < 0) or np.any(c0 < 0):
            k = int(np.argmax((c1 < 0) | (c0 < 0)))
            raise NegativeCount(f"table '{self.name}': negative count in cell {k}")
        if c1.sum() <= 0 or c0.sum() <= 0:
            raise ValidationFailure(f"table '{self.name}': each label needs a positive total count")
        object.__setattr__(self, "counts1", _readonly(c1))
        object.__setattr__(self, "counts0", _readonly(c0))

    @property
    def total_count(self) -> float:
        return float(self.counts1.sum() + self.counts0.sum())


@dataclass(frozen=True)
class MarginalTarget:
    """External estimate of the marginal probability P(Y=1), in (0,1)."""

    p1: float

    def __post_init__(self):
        if not (0.0 < self.p1 < 1.0):
            raise ValidationFailure(f"marginal target must lie in (0,1), got {self.p1}")


class IndividualDataset:
    """Unlabeled individual-level rows with sampling weights.

    Parameters
    ----------
    covariate_names : sequence of str
        Unique column identifiers, one per covariate.
    values : (n, p) array
        Covariate matrix; missing entries are NaN and may appear only in
        covariates listed in ``imputable``.
    weights : (n,) array
        Raw sampling weights, all positive. They are normalized to sum to
        one at construction; every downstream formula assumes that.
    group_labels : mapping scheme name -> (n,) array of labels, optional
    imputable : covariate names allowed to contain missing values
    """

    def __init__(self, covariate_names, values, weights, group_labels=None, imputable=()):
        names = tuple(covariate_names)
        if len(names) == 0:
            raise ValidationFailure("dataset needs at least one covariate")
        if len(set(names)) != len(names):
            raise ValidationFailure("covariate names must be unique")
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] != len(names):
            raise ValidationFailure(
                f"values must be an (n, {len(names)}) matrix with n >= 1, got shape {values.shape}"
            )
        w = np.asarray(weights, dtype=float)
        if w.shape != (values.shape[0],):
            raise ValidationFailure("weights length must match the number of rows")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            i = int(np.argmax(~np.isfinite(w) | (w <= 0)))
            raise NonPositiveWeight(f"row {i}: weight {w[i]} is not a positive finite number")

        self.covariate_names = names
        self.imputable = tuple(imputable)
        for c in self.imputable:
            if c not in names:
                raise UnknownCovariate(f"imputable covariate '{c}' not in dataset")
        bad = [
            names[j]
            for j in range(len(names))
            if np.any(np.isnan(values[:, j])) and names[j] not in self.imputable
        ]
        if bad:
            raise MissingTableCovariateValue(
                f"missing values in non-imputable covariates: {', '.join(bad)}"
            )
        self.values = _readonly(values)
        self.weights = _readonly(w / w.sum())
        gl = {}
        for scheme, labels in (group_labels or {}).items():
            arr = np.asarray(labels, dtype=object)
            if arr.shape != (values.shape[0],):
                raise ValidationFailure(f"group scheme '{scheme}': labels length mismatch")
            gl[scheme] = _readonly(arr)
        self.group_labels = gl

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def column_index(self, name: str) -> int:
        try:
            return self.covariate_names.index(name)
        except ValueError:
            raise UnknownCovariate(f"covariate '{name}' not in dataset") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_index(name)]

    def design(self, covariates) -> np.ndarray:
        """(n, q) matrix of the named covariates, in order."""
        idx = [self.column_index(c) for c in covariates]
        return self.values[:, idx]

    def subset(self, rows: np.ndarray) -> "IndividualDataset":
        """Row-resampled copy; weights are renormalized within the subset."""
        return IndividualDataset(
            self.covariate_names,
            self.values[rows],
            self.weights[rows],
            {s: labels[rows] for s, labels in self.group_labels.items()},
            self.imputable,
        )

    def with_column(self, name: str, new_values: np.ndarray) -> "IndividualDataset":
        """Copy with one covariate column replaced (used by imputation)."""
        j = self.column_index(name)
        values = np.array(self.values, copy=True)
        values[:, j] = new_values
        return IndividualDataset(
            self.covariate_names, values, self.weights, self.group_labels, self.imputable
        )


# -- partition validation ----------------------------------------------------


@dataclass
class ValidationReport:
    """Outcome of geometric and occupancy checks for one partition."""

    disjoint: bool
    covered: bool
    occupancy: np.ndarray
    uncovered_rows: list = field(default_factory=list)
    problems: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.disjoint and self.covered and not self.uncovered_rows

    @property
    def empty_cells(self) -> list:
        return [int(k) for k in np.flatnonzero(self.occupancy == 0)]


def _axis_probes(partition: CellPartition, axis: int, observed: np.ndarray | None) -> np.ndarray:
    """Probe values for one axis: a dense grid over the observed range
    (extended by 10% each side) plus every finite bound and the midpoints
    between consecutive bounds, restricted to the axis hull.

    The hull is the contiguous span from the smallest lower bound to the
    largest upper bound, honouring endpoint openness; values outside it
    (e.g. exactly on an open outer boundary) are not coverage obligations.
    """
    ivs = [cell.bounds[axis] for cell in partition.cells]
    finite = sorted(
        {b for iv in ivs for b in (iv.lo, iv.hi) if math.isfinite(b)}
    )
    lo = min(iv.lo for iv in ivs)
    hi = max(iv.hi for iv in ivs)

    candidates: list[float] = list(finite)
    for a, b in zip(finite, finite[1:]):
        candidates.append(0.5 * (a + b))
    if observed is not None and observed.size:
        obs_lo, obs_hi = float(observed.min()), float(observed.max())
    elif finite:
        obs_lo, obs_hi = finite[0], finite[-1]
    else:
        obs_lo, obs_hi = -1.0, 1.0
    span = obs_hi - obs_lo or 1.0
    grid_lo = obs_lo - COVERAGE_RANGE_EXTENSION * span
    grid_hi = obs_hi + COVERAGE_RANGE_EXTENSION * span
    candidates.extend(np.linspace(grid_lo, grid_hi, COVERAGE_GRID_POINTS))

    def in_hull(x: float) -> bool:
        if lo < x < hi:
            return True
        return any(iv.contains(x) for iv in ivs)

    return np.array(sorted({float(x) for x in candidates if in_hull(x)}))


def coverage_gaps(
    partition: CellPartition, dataset: IndividualDataset | None = None
) -> list[tuple[float, ...]]:
    """Probe points inside the partition hull that no cell contains.

    Probes Cartesian-combine the per-axis candidate values; with a dataset,
    the observed range drives the grid and every row is probed as well.
    """
    r = len(partition.table_covariates)
    per_axis = []
    for axis, name in enumerate(partition.table_covariates):
        observed = dataset.column(name) if dataset is not None else None
        per_axis.append(_axis_probes(partition, axis, observed))
    gaps = []
    for point in itertools.product(*per_axis):
        cols = tuple(np.array([v]) for v in point)
        hits = sum(bool(cell.contains_rows(cols)[0]) for cell in partition.cells)
        if hits == 0:
            gaps.append(point)
    return gaps


def validate_partition(partition: CellPartition, dataset: IndividualDataset) -> ValidationReport:
    """Check disjointness, coverage, and per-cell dataset occupancy.

    Raises UnknownCovariate / MissingTableCovariateValue when the dataset
    cannot even be probed; geometric failures are reported, not raised.
    Cells containing zero dataset rows are permitted but warned about.
    """
    for name in partition.table_covariates:
        col = dataset.column(name)  # raises UnknownCovariate
        if np.any(np.isnan(col)):
            raise MissingTableCovariateValue(
                f"table covariate '{name}' has missing values; table covariates must be fully observed"
            )

    report = ValidationReport(
        disjoint=True,
        covered=True,
        occupancy=np.zeros(partition.n_cells, dtype=int),
    )

    pairs = partition.overlapping_pairs()
    if pairs:
        report.disjoint = False
        for i, j in pairs:
            report.problems.append(
                f"cells {i} and {j} overlap: {partition.describe_cell(i)} vs {partition.describe_cell(j)}"
            )

    gaps = coverage_gaps(partition, dataset)
    if gaps:
        report.covered = False
        shown = ", ".join(str(g) for g in gaps[:5])
        report.problems.append(f"{len(gaps)} probe points uncovered (first few: {shown})")

    cols = tuple(dataset.column(name) for name in partition.table_covariates)
    membership = np.zeros(dataset.n, dtype=int)
    for k, cell in enumerate(partition.cells):
        mask = cell.contains_rows(cols)
        report.occupancy[k] = int(mask.sum())
        membership += mask
    outside = np.flatnonzero(membership == 0)
    if outside.size:
        report.uncovered_rows = [int(i) for i in outside]
        report.problems.append(
            f"{outside.size} dataset rows fall in no cell (first: row {int(outside[0])})"
        )
    for k in report.empty_cells:
        msg = f"cell {k} ({partition.describe_cell(k)}) contains zero dataset rows"
        report.notes.append(msg)
        warnings.warn(msg, EmptyCellWarning, stacklevel=2)
    return report


def assign_cells(partition: CellPartition, dataset: IndividualDataset) -> np.ndarray:
    """Map every row to its cell index in 0..K-1.

    Requires a validated partition; a row matched by no cell raises
    RowOutsidePartition (values exactly on an open boundary owned by no
    cell surface here rather than being silently nudged).
    """
    for name in partition.table_covariates:
        if np.any(np.isnan(dataset.column(name))):
            raise MissingTableCovariateValue(
                f"table covariate '{name}' has missing values; cannot assign cells"
            )
    cols = tuple(dataset.column(name) for name in partition.table_covariates)
    assignment = np.full(dataset.n, -1, dtype=np.int64)
    for k, cell in enumerate(partition.cells):
        mask = cell.contains_rows(cols)
        assignment[mask & (assignment >= 0)] = -2
        assignment[mask & (assignment == -1)] = k
    if np.any(assignment == -2):
        i = int(np.argmax(assignment == -2))
        raise RowOutsidePartition(f"row {i} matched by more than one cell; partition is not disjoint")
    if np.any(assignment == -1):
        i = int(np.argmax(assignment == -1))
        vals = tuple(float(c[i]) for c in cols)
        raise RowOutsidePartition(
            f"row {i} with table covariates {vals} falls in no cell of the partition"
        )
    return assignment


def banded_partition(
    covariate: str,
    edges,
    domain=(-math.inf, math.inf),
    lo_open: bool = True,
) -> CellPartition:
    """One-covariate partition into consecutive bands.

    Bands run between ``domain[0], edges..., domain[1]``. With the default
    convention each band is lower-open/upper-closed; an infinite upper end
    is left open. ``lo_open=False`` flips to lower-closed/upper-open.
    """
    bounds = [float(domain[0]), *[float(e) for e in edges], float(domain[1])]
    if sorted(bounds) != bounds or len(set(bounds)) != len(bounds):
        raise ValidationFailure(f"band edges must be strictly increasing, got {bounds}")
    cells = []
    for lo, hi in zip(bounds, bounds[1:]):
        if lo_open:
            iv = Interval(lo, hi, lo_open=True, hi_closed=math.isfinite(hi))
        else:
            iv = Interval(lo, hi, lo_open=not math.isfinite(lo), hi_closed=not math.isfinite(hi))
        cells.append(Cell((iv,)))
    return CellPartition((covariate,), tuple(cells))


def crossed_partition(
    base: CellPartition, covariate: str, split: float, domain=(0.0, math.inf)
) -> CellPartition:
    """Cross a one-covariate partition with a binary split on a second.

    Every cell of ``base`` is paired with [domain lo, split) and
    [split, domain hi]; the second axis uses the lower-closed/upper-open
    convention with closed infinite tails.
    """
    if len(base.table_covariates) != 1:
        raise ValidationFailure("can only cross a one-covariate partition")
    lo, hi = float(domain[0]), float(domain[1])
    below = Interval(lo, split, lo_open=not math.isfinite(lo), hi_closed=False)
    above = Interval(split, hi, lo_open=False, hi_closed=True)
    cells = []
    for cell in base.cells:
        for second in (below, above):
            cells.append(Cell((cell.bounds[0], second)))
    return CellPartition((*base.table_covariates, covariate), tuple(cells))


def check_identifiability(partition: CellPartition, n_coefficients: int) -> bool:
    """True when the table offers enough degrees of freedom: 2K - 1 must be
    at least the coefficient count (intercept included). A violation warns
    rather than errors since the intercept is recalibrated afterwards.
    """
    K = partition.n_cells
    ok = 2 * K - 1 >= n_coefficients
    if not ok:
        warnings.warn(
            f"table with {K} cells supports at most {2 * K - 1} coefficients "
            f"but the model has {n_coefficients}; estimates may not be identifiable",
            IdentifiabilityWarning,
            stacklevel=2,
        )
    return ok
