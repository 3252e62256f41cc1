import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ctlogit.data import (
    Cell,
    CellPartition,
    ContingencyTable,
    IndividualDataset,
    Interval,
    MarginalTarget,
    assign_cells,
    banded_partition,
    check_identifiability,
    coverage_gaps,
    crossed_partition,
    validate_partition,
)
from ctlogit.errors import (
    EmptyCellWarning,
    IdentifiabilityWarning,
    MissingTableCovariateValue,
    NegativeCount,
    NonPositiveWeight,
    RowOutsidePartition,
    UnknownCovariate,
    ValidationFailure,
)

INF = math.inf


def simple_dataset(values, weights=None, **kwargs):
    values = np.atleast_2d(np.asarray(values, dtype=float).T).T
    if values.ndim == 1:
        values = values[:, None]
    if weights is None:
        weights = np.ones(values.shape[0])
    names = kwargs.pop("names", [f"x{j}" for j in range(values.shape[1])])
    return IndividualDataset(names, values, weights, **kwargs)


class TestInterval:
    def test_lower_open_upper_closed_membership(self):
        iv = Interval(1.25, 1.5, lo_open=True, hi_closed=True)
        assert not iv.contains(1.25)
        assert iv.contains(1.5)
        assert iv.contains(1.3)

    def test_lower_closed_upper_open_membership(self):
        iv = Interval(0.0, 1000.0, lo_open=False, hi_closed=False)
        assert iv.contains(0.0)
        assert not iv.contains(1000.0)

    def test_infinite_bounds(self):
        iv = Interval(2.0, INF, lo_open=True, hi_closed=False)
        assert iv.contains(1e12)
        assert not iv.contains(2.0)

    def test_vectorized_contains(self):
        iv = Interval(0.0, 1.0)
        np.testing.assert_array_equal(
            iv.contains(np.array([0.0, 0.5, 1.0, 1.5])),
            np.array([False, True, True, False]),
        )

    def test_inverted_bounds_rejected(self):
        with pytest.raises(ValidationFailure):
            Interval(2.0, 1.0)

    def test_degenerate_point_interval(self):
        iv = Interval(3.0, 3.0, lo_open=False, hi_closed=True)
        assert iv.contains(3.0)
        with pytest.raises(ValidationFailure):
            Interval(3.0, 3.0, lo_open=True, hi_closed=True)

    def test_intersects_interior_overlap(self):
        assert Interval(0, 2).intersects(Interval(1, 3))
        assert not Interval(0, 1).intersects(Interval(2, 3))

    def test_shared_boundary_openness_decides(self):
        # (0,1] and (1,2] meet at 1 but only the left one owns it.
        a = Interval(0, 1, lo_open=True, hi_closed=True)
        b = Interval(1, 2, lo_open=True, hi_closed=True)
        assert not a.intersects(b)
        # [0,1] and [1,2] both own the point.
        c = Interval(0, 1, lo_open=False, hi_closed=True)
        d = Interval(1, 2, lo_open=False, hi_closed=True)
        assert c.intersects(d)

    def test_describe(self):
        assert Interval(0, 1).describe() == "(0,1]"
        assert Interval(0, 1000, lo_open=False, hi_closed=False).describe() == "[0,1000)"


class TestPartitionBuilders:
    def test_banded_partition_bands(self):
        part = banded_partition("odn", [1, 1.25, 1.5, 1.75, 2], domain=(0.0, INF))
        assert part.n_cells == 6
        assert part.describe_cell(0) == "odn (0,1]"
        assert part.describe_cell(5) == "odn (2,inf)"

    def test_banded_partition_rejects_unsorted_edges(self):
        with pytest.raises(ValidationFailure):
            banded_partition("x", [2, 1])
        with pytest.raises(ValidationFailure):
            banded_partition("x", [1, 1])

    def test_crossed_partition_doubles_cells(self):
        base = banded_partition("odn", [1.0], domain=(0.0, INF))
        part = crossed_partition(base, "vl", 1000.0, domain=(0.0, INF))
        assert part.n_cells == 4
        assert part.table_covariates == ("odn", "vl")
        # Second axis is lower-closed/upper-open with a closed split point.
        assert part.describe_cell(0) == "odn (0,1] x vl [0,1000)"
        assert part.describe_cell(1) == "odn (0,1] x vl [1000,inf]"


class TestIndividualDataset:
    def test_weights_normalized(self):
        ds = simple_dataset([1.0, 2.0, 3.0], weights=[2.0, 3.0, 5.0])
        assert_allclose(ds.weights.sum(), 1.0)
        assert_allclose(ds.weights, [0.2, 0.3, 0.5])

    def test_values_read_only(self):
        ds = simple_dataset([1.0, 2.0])
        with pytest.raises(ValueError):
            ds.values[0, 0] = 9.0

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(NonPositiveWeight):
            simple_dataset([1.0, 2.0], weights=[1.0, 0.0])
        with pytest.raises(NonPositiveWeight):
            simple_dataset([1.0, 2.0], weights=[1.0, -2.0])

    def test_missing_only_in_imputable(self):
        vals = np.array([[1.0, np.nan], [2.0, 0.5]])
        with pytest.raises(MissingTableCovariateValue):
            IndividualDataset(["a", "b"], vals, [1, 1])
        ds = IndividualDataset(["a", "b"], vals, [1, 1], imputable=("b",))
        assert np.isnan(ds.column("b")[0])

    def test_unknown_covariate(self):
        ds = simple_dataset([1.0, 2.0])
        with pytest.raises(UnknownCovariate):
            ds.column("missing")
        with pytest.raises(UnknownCovariate):
            IndividualDataset(["a"], [[1.0]], [1.0], imputable=("zzz",))

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValidationFailure):
            IndividualDataset(["a", "a"], [[1.0, 2.0]], [1.0])

    def test_design_column_order(self):
        ds = simple_dataset(np.array([[1.0, 10.0], [2.0, 20.0]]), names=["a", "b"])
        assert_allclose(ds.design(["b", "a"]), [[10.0, 1.0], [20.0, 2.0]])

    def test_subset_renormalizes_weights(self):
        ds = simple_dataset([1.0, 2.0, 3.0], weights=[1.0, 1.0, 2.0])
        sub = ds.subset(np.array([0, 2, 2]))
        assert_allclose(sub.weights, [0.2, 0.4, 0.4])
        assert_allclose(sub.values[:, 0], [1.0, 3.0, 3.0])

    def test_subset_carries_group_labels(self):
        ds = simple_dataset(
            [1.0, 2.0, 3.0], group_labels={"g": np.array(["a", "b", "a"], dtype=object)}
        )
        sub = ds.subset(np.array([2, 0]))
        assert list(sub.group_labels["g"]) == ["a", "a"]

    def test_with_column_replaces_values(self):
        vals = np.array([[1.0, np.nan], [2.0, 0.5]])
        ds = IndividualDataset(["a", "b"], vals, [1, 1], imputable=("b",))
        ds2 = ds.with_column("b", np.array([9.0, 0.5]))
        assert_allclose(ds2.column("b"), [9.0, 0.5])
        assert np.isnan(ds.column("b")[0])


class TestContingencyTable:
    def test_negative_count_rejected(self):
        part = banded_partition("x", [0.0])
        with pytest.raises(NegativeCount):
            ContingencyTable(part, [1.0, -0.5], [1.0, 1.0])

    def test_zero_label_total_rejected(self):
        part = banded_partition("x", [0.0])
        with pytest.raises(ValidationFailure):
            ContingencyTable(part, [0.0, 0.0], [1.0, 1.0])

    def test_length_mismatch_rejected(self):
        part = banded_partition("x", [0.0])
        with pytest.raises(ValidationFailure):
            ContingencyTable(part, [1.0], [1.0])

    def test_counts_may_be_fractional(self):
        part = banded_partition("x", [0.0])
        t = ContingencyTable(part, [239.6, 0.0], [24.0, 1.0])
        assert t.total_count == pytest.approx(264.6)


class TestMarginalTarget:
    def test_bounds(self):
        assert MarginalTarget(0.126).p1 == 0.126
        for bad in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(ValidationFailure):
                MarginalTarget(bad)


class TestAssignCells:
    def test_band_assignment_and_boundary_ownership(self):
        part = banded_partition("x", [1, 1.25, 1.5, 1.75, 2], domain=(0.0, INF))
        ds = simple_dataset([0.5, 1.1, 3.0, 1.5], names=["x"])
        # 1.5 sits on the closed upper edge of (1.25,1.5]; 3.0 in the tail.
        assert assign_cells(part, ds).tolist() == [0, 1, 5, 2]

    def test_row_outside_partition(self):
        part = banded_partition("x", [1.0], domain=(0.0, INF))
        ds = simple_dataset([0.5, 0.0], names=["x"])
        with pytest.raises(RowOutsidePartition):
            assign_cells(part, ds)

    def test_missing_table_covariate(self):
        part = banded_partition("b", [0.0])
        vals = np.array([[1.0, np.nan], [2.0, 0.5]])
        ds = IndividualDataset(["a", "b"], vals, [1, 1], imputable=("b",))
        with pytest.raises(MissingTableCovariateValue):
            assign_cells(part, ds)

    def test_overlapping_cells_detected(self):
        cells = (Cell((Interval(0, 2),)), Cell((Interval(1, 3),)))
        part = CellPartition(("x",), cells)
        ds = simple_dataset([1.5], names=["x"])
        with pytest.raises(RowOutsidePartition):
            assign_cells(part, ds)

    def test_two_axis_assignment(self):
        base = banded_partition("odn", [1.0], domain=(0.0, INF))
        part = crossed_partition(base, "vl", 1000.0, domain=(0.0, INF))
        ds = simple_dataset(
            np.array([[0.5, 10.0], [0.5, 1000.0], [2.0, 999.9], [2.0, 5e5]]),
            names=["odn", "vl"],
        )
        assert assign_cells(part, ds).tolist() == [0, 1, 2, 3]


class TestValidatePartition:
    def test_valid_partition_reports_ok(self):
        part = banded_partition("x", [0.0, 1.0])
        ds = simple_dataset([-0.5, 0.5, 1.5], names=["x"])
        report = validate_partition(part, ds)
        assert report.ok
        assert report.disjoint and report.covered
        assert report.occupancy.tolist() == [1, 1, 1]

    def test_overlap_reported(self):
        cells = (Cell((Interval(0, 2),)), Cell((Interval(1, 3),)), Cell((Interval(-INF, 0),)))
        part = CellPartition(("x",), cells)
        ds = simple_dataset([0.5], names=["x"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyCellWarning)
            report = validate_partition(part, ds)
        assert not report.disjoint
        assert any("overlap" in p for p in report.problems)

    def test_interior_gap_detected(self):
        # (-inf,0] and (1,inf) leave (0,1] uncovered.
        cells = (Cell((Interval(-INF, 0),)), Cell((Interval(1, INF, hi_closed=False),)))
        part = CellPartition(("x",), cells)
        ds = simple_dataset([-1.0, 2.0], names=["x"])
        report = validate_partition(part, ds)
        assert not report.covered

    def test_region_below_open_domain_is_not_a_gap(self):
        # Cells span (0,inf); probes below zero are outside the hull and
        # must not be flagged.
        part = banded_partition("x", [1.0, 2.0], domain=(0.0, INF))
        ds = simple_dataset([0.5, 1.5, 2.5], names=["x"])
        report = validate_partition(part, ds)
        assert report.covered
        assert report.ok

    def test_uncovered_rows_reported(self):
        part = banded_partition("x", [1.0], domain=(0.0, INF))
        ds = simple_dataset([0.5, 0.0], names=["x"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyCellWarning)
            report = validate_partition(part, ds)
        assert report.uncovered_rows == [1]
        assert not report.ok

    def test_empty_cell_warns(self):
        part = banded_partition("x", [1.0, 2.0], domain=(0.0, INF))
        ds = simple_dataset([0.5, 2.5], names=["x"])
        with pytest.warns(EmptyCellWarning):
            report = validate_partition(part, ds)
        assert report.empty_cells == [1]

    def test_coverage_gaps_direct(self):
        cells = (Cell((Interval(0, 1),)), Cell((Interval(2, INF, hi_closed=False),)))
        part = CellPartition(("x",), cells)
        gaps = coverage_gaps(part)
        assert gaps
        assert all(1.0 < g[0] <= 2.0 for g in gaps)

    def test_bivariate_fixture_geometry(self, biv_table, survey_dataset):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyCellWarning)
            report = validate_partition(biv_table.partition, survey_dataset)
        assert report.disjoint
        assert report.covered
        assert not report.uncovered_rows


class TestIdentifiability:
    def test_formula_boundary_is_identifiable(self):
        part = banded_partition("x", [0.0])  # K = 2
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert check_identifiability(part, 3)  # 2K-1 = 3 >= 3

    def test_violation_warns_not_raises(self):
        part = banded_partition("x", [0.0])  # K = 2
        with pytest.warns(IdentifiabilityWarning):
            assert not check_identifiability(part, 4)
