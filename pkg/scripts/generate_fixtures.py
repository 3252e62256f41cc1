"""Regenerate the shipped fixtures under data/.

The two table files carry fixed counts and are written verbatim; the
dataset is drawn from seeded streams so reruns reproduce it byte for
byte. Run from the repository root:

    python3 scripts/generate_fixtures.py
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ctlogit.rng import TAG_SYNTHETIC, substream

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"

LOG_VL_SPLIT = math.log(1000.0)

# Univariate table: optical-density bands, lower-open/upper-closed.
ODN_BANDS = [
    ((0.0, 1.0), 239.6, 24),
    ((1.0, 1.25), 57.2, 13),
    ((1.25, 1.5), 57.2, 23),
    ((1.5, 1.75), 40.8, 10),
    ((1.75, 2.0), 43.6, 23),
    ((2.0, None), 555.6, 3646),
]

# Bivariate table: the same assay axis crossed with viral load below/above
# 1000 copies/mL (stored on the natural-log scale); the last band spans the
# whole viral-load range as a single cell.
ODN_VL_CELLS = [
    ((0.0, 0.5), "low", 25.8, 4.4),
    ((0.0, 0.5), "high", 75.6, 2.6),
    ((0.5, 1.0), "low", 22.3, 0.9),
    ((0.5, 1.0), "high", 68.7, 7.0),
    ((1.0, 1.5), "low", 6.9, 9.6),
    ((1.0, 1.5), "high", 73.9, 19.2),
    ((1.5, 2.0), "low", 3.4, 6.1),
    ((1.5, 2.0), "high", 36.1, 17.5),
    ((2.0, 2.5), "low", 6.9, 9.6),
    ((2.0, 2.5), "high", 80.7, 47.1),
    ((2.5, 3.0), "low", 1.7, 5.2),
    ((2.5, 3.0), "high", 77.3, 91.7),
    ((3.0, 4.5), "low", 6.9, 22.7),
    ((3.0, 4.5), "high", 108.2, 340.5),
    ((4.5, None), "full", 32.6, 289.0),
]

N_ROWS = 705
N_MISSING = 24
DATASET_SEED = 20240705


def odn_interval(lo, hi):
    return {
        "lo": lo,
        "hi": hi,
        "lo_open": True,
        "hi_closed": hi is not None,
    }


def vl_interval(kind):
    if kind == "low":
        return {"lo": None, "hi": LOG_VL_SPLIT, "lo_open": True, "hi_closed": False}
    if kind == "high":
        return {"lo": LOG_VL_SPLIT, "hi": None, "lo_open": False, "hi_closed": True}
    return {"lo": None, "hi": None, "lo_open": True, "hi_closed": True}


def write_json(obj, path):
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def univariate_table():
    return {
        "name": "odn_univariate",
        "table_covariates": ["odn"],
        "cells": [
            {"bounds": {"odn": odn_interval(lo, hi)}, "count_y1": c1, "count_y0": c0}
            for (lo, hi), c1, c0 in ODN_BANDS
        ],
    }


def bivariate_table():
    return {
        "name": "odn_vl_bivariate",
        "table_covariates": ["odn", "log_vl"],
        "cells": [
            {
                "bounds": {"odn": odn_interval(lo, hi), "log_vl": vl_interval(kind)},
                "count_y1": c1,
                "count_y0": c0,
            }
            for (lo, hi), kind, c1, c0 in ODN_VL_CELLS
        ],
    }


def survey_dataset():
    rng = substream(DATASET_SEED, TAG_SYNTHETIC)
    n = N_ROWS
    odn = rng.gamma(2.0, 1.5, n)
    log_vl = rng.normal(8.0, 2.0, n)
    # CD4-like standardized marker, correlated with both assay axes.
    cd4_z = -0.35 * (odn - 3.0) + 0.2 * (log_vl - 8.0) + rng.normal(0.0, 1.0, n)
    sr_pos = (rng.random(n) < 0.35).astype(float)
    weight = rng.lognormal(0.0, 0.5, n)
    region = rng.choice(np.array(["east", "north", "south", "west"], dtype=object), n)
    sex = rng.choice(np.array(["f", "m"], dtype=object), n)
    missing_rows = rng.choice(n, size=N_MISSING, replace=False)

    rows = []
    for i in range(n):
        cd4 = "NA" if i in set(missing_rows.tolist()) else repr(float(cd4_z[i]))
        rows.append(
            [
                repr(float(odn[i])),
                repr(float(log_vl[i])),
                cd4,
                repr(float(sr_pos[i])),
                repr(float(weight[i])),
                str(region[i]),
                str(sex[i]),
            ]
        )
    return rows


def main():
    DATA.mkdir(exist_ok=True)
    write_json(univariate_table(), DATA / "odn_univariate.json")
    write_json(bivariate_table(), DATA / "odn_vl_bivariate.json")

    with open(DATA / "synthetic_survey.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["odn", "log_vl", "cd4_z", "sr_pos", "weight", "region", "sex"])
        writer.writerows(survey_dataset())

    write_json(
        {
            "covariates": ["odn", "log_vl", "cd4_z", "sr_pos"],
            "weight": "weight",
            "groups": {"region": "region", "sex": "sex"},
            "imputable": ["cd4_z"],
            "missing": ["", "NA"],
            "bct": {"odn": "odn", "vl": "log_vl", "vl_scale": "log"},
        },
        DATA / "synthetic_survey.manifest.json",
    )

    write_json(
        {
            "population": {"n": 5000, "seed": 7},
            "truth": {"covariates": ["odn"], "slopes": [-1.0], "p1": 0.126},
            "partition": {"covariate": "odn", "edges": [1, 1.25, 1.5, 1.75, 2], "domain": [0, None]},
            "sample_p1": 0.21,
            "table_size": 4733,
            "replicates": 200,
            "seed": 11,
        },
        DATA / "study_univariate.json",
    )


if __name__ == "__main__":
    main()
