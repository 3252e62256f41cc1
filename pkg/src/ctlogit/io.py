"""File formats: dataset manifests, table JSON, and result serialization.

A dataset is a delimited file plus a JSON manifest naming the covariate
columns, the weight column, optional group-label columns, which covariates
may contain missing values, and (optionally) the recency-rule columns.
Tables are standalone JSON documents carrying their own cell geometry, so
a table file can be validated against any dataset. All writers are
deterministic: keys are sorted, floats use shortest round-trip repr, and
no timestamps are embedded.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .data import Cell, CellPartition, ContingencyTable, Interval, IndividualDataset
from .errors import ConfigError, DuplicateColumn, ParseError, UnknownCovariate
from .inference import RecencyRule

DEFAULT_MISSING_MARKERS = ("", "NA", "NaN", "nan")


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read JSON from {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseError(f"{path}: expected a JSON object at top level")
    return obj


def load_manifest(path) -> dict:
    manifest = _load_json(path)
    if "covariates" not in manifest or not manifest["covariates"]:
        raise ConfigError(f"{path}: manifest must list covariate columns")
    if "weight" not in manifest:
        raise ConfigError(f"{path}: manifest must name the weight column")
    for key in ("covariates", "imputable"):
        val = manifest.get(key, [])
        if not isinstance(val, list) or not all(isinstance(c, str) for c in val):
            raise ConfigError(f"{path}: '{key}' must be a list of column names")
    groups = manifest.get("groups", {})
    if not isinstance(groups, dict):
        raise ConfigError(f"{path}: 'groups' must map scheme names to columns")
    bct = manifest.get("bct")
    if bct is not None and not ({"odn", "vl"} <= set(bct)):
        raise ConfigError(f"{path}: 'bct' needs 'odn' and 'vl' column names")
    return manifest


def recency_rule(manifest: dict) -> RecencyRule | None:
    bct = manifest.get("bct")
    if bct is None:
        return None
    return RecencyRule(
        odn=bct["odn"], vl=bct["vl"], vl_scale=bct.get("vl_scale", "raw")
    )


def load_dataset(data_path, manifest_path) -> tuple[IndividualDataset, dict]:
    """Read a delimited dataset under its manifest.

    Returns the dataset and the manifest dict (for the recency rule and
    any caller-side bookkeeping).
    """
    manifest = load_manifest(manifest_path)
    markers = manifest.get("missing", list(DEFAULT_MISSING_MARKERS))
    try:
        with open(data_path, newline="") as fh:
            header = next(csv.reader(fh), [])
        frame = pd.read_csv(
            data_path, na_values=markers, keep_default_na=False, skipinitialspace=True
        )
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read delimited data from {data_path}: {exc}") from exc
    # The reader renames repeated headers, so check the raw header line.
    header = [h.strip() for h in header]
    seen = set()
    for col in header:
        if col in seen:
            raise DuplicateColumn(f"{data_path}: column '{col}' appears more than once")
        seen.add(col)

    def pull(col, numeric=True):
        if col not in frame.columns:
            raise UnknownCovariate(f"{data_path}: manifest references missing column '{col}'")
        if not numeric:
            return frame[col].astype(str).to_numpy(dtype=object)
        vals = pd.to_numeric(frame[col], errors="coerce")
        bad = vals.isna() & ~frame[col].isna()
        if bad.any():
            i = int(np.argmax(bad.to_numpy()))
            raise ParseError(
                f"{data_path}: column '{col}' row {i} is not numeric: {frame[col].iloc[i]!r}"
            )
        return vals.to_numpy(dtype=float)

    values = np.column_stack([pull(c) for c in manifest["covariates"]])
    weights = pull(manifest["weight"])
    groups = {
        scheme: pull(col, numeric=False)
        for scheme, col in manifest.get("groups", {}).items()
    }
    dataset = IndividualDataset(
        manifest["covariates"],
        values,
        weights,
        group_labels=groups,
        imputable=tuple(manifest.get("imputable", [])),
    )
    return dataset, manifest


# -- table JSON --------------------------------------------------------------


def _interval_from_json(obj, where: str) -> Interval:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: interval must be an object")
    lo = obj.get("lo")
    hi = obj.get("hi")
    return Interval(
        lo=-math.inf if lo is None else float(lo),
        hi=math.inf if hi is None else float(hi),
        lo_open=bool(obj.get("lo_open", True)),
        hi_closed=bool(obj.get("hi_closed", True)),
    )


def _interval_to_json(iv: Interval) -> dict:
    return {
        "lo": None if not math.isfinite(iv.lo) else iv.lo,
        "hi": None if not math.isfinite(iv.hi) else iv.hi,
        "lo_open": iv.lo_open,
        "hi_closed": iv.hi_closed,
    }


def load_table(path) -> ContingencyTable:
    obj = _load_json(path)
    for key in ("table_covariates", "cells"):
        if key not in obj:
            raise ParseError(f"{path}: table JSON needs '{key}'")
    covs = tuple(obj["table_covariates"])
    cells = []
    counts1 = []
    counts0 = []
    for i, cell in enumerate(obj["cells"]):
        where = f"{path} cell {i}"
        bounds = cell.get("bounds")
        if not isinstance(bounds, dict) or set(bounds) != set(covs):
            raise ParseError(f"{where}: bounds must cover exactly {covs}")
        cells.append(
            Cell(tuple(_interval_from_json(bounds[c], where) for c in covs))
        )
        for key, dest in (("count_y1", counts1), ("count_y0", counts0)):
            if key not in cell:
                raise ParseError(f"{where}: missing '{key}'")
            dest.append(float(cell[key]))
    partition = CellPartition(covs, tuple(cells))
    return ContingencyTable(
        partition,
        np.array(counts1),
        np.array(counts0),
        name=obj.get("name", Path(path).stem),
    )


def table_to_json(table: ContingencyTable) -> dict:
    covs = table.partition.table_covariates
    return {
        "name": table.name,
        "table_covariates": list(covs),
        "cells": [
            {
                "bounds": {
                    c: _interval_to_json(iv) for c, iv in zip(covs, cell.bounds)
                },
                "count_y1": float(c1),
                "count_y0": float(c0),
            }
            for cell, c1, c0 in zip(table.partition.cells, table.counts1, table.counts0)
        ],
    }


def save_table(table: ContingencyTable, path) -> None:
    write_json(table_to_json(table), path)


# -- deterministic writers ---------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return None if math.isnan(f) else f
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def write_json(obj: dict, path) -> None:
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n")


def config_hash(config: dict) -> str:
    canon = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode()).hexdigest()


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_delimited(path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_predictions(path, probabilities, recent=None) -> None:
    header = ["row", "probability"] + (["recent"] if recent is not None else [])
    rows = []
    for i, p in enumerate(probabilities):
        row = [i, p]
        if recent is not None:
            row.append(int(recent[i]))
        rows.append(row)
    write_delimited(path, header, rows)


def write_group_estimates(path, estimates, intervals=None) -> None:
    """Group table; with bootstrap intervals two CI columns are appended."""
    by_label = {g.label: g for g in intervals} if intervals is not None else {}
    header = ["group", "n", "weight_share", "probability", "recent_share"]
    if intervals is not None:
        header += ["ci_lower", "ci_upper"]
    rows = []
    for est in estimates:
        row = [est.label, est.n, est.weight_share, est.probability, est.recent_share]
        if intervals is not None:
            gi = by_label.get(est.label)
            row += [gi.lower if gi else None, gi.upper if gi else None]
        rows.append(row)
    write_delimited(path, header, rows)
