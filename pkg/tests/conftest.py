import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from ctlogit.io import load_dataset, load_table

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


@pytest.fixture(scope="session")
def survey():
    dataset, manifest = load_dataset(
        DATA_DIR / "synthetic_survey.csv", DATA_DIR / "synthetic_survey.manifest.json"
    )
    return dataset, manifest


@pytest.fixture(scope="session")
def survey_dataset(survey):
    return survey[0]


@pytest.fixture(scope="session")
def uni_table():
    return load_table(DATA_DIR / "odn_univariate.json")


@pytest.fixture(scope="session")
def biv_table():
    return load_table(DATA_DIR / "odn_vl_bivariate.json")
