import json

import numpy as np
import pytest
from click.testing import CliRunner

from ctlogit.cli import Workspace, main


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def args(data_dir):
    return [
        "--data", str(data_dir / "synthetic_survey.csv"),
        "--manifest", str(data_dir / "synthetic_survey.manifest.json"),
        "--table", str(data_dir / "odn_univariate.json"),
    ]


@pytest.fixture()
def args_both(args, data_dir):
    return args + ["--table", str(data_dir / "odn_vl_bivariate.json")]


class TestValidate:
    def test_reports_both_tables(self, runner, args_both):
        result = runner.invoke(main, ["validate", *args_both])
        assert result.exit_code == 0, result.output
        assert "6 cells" in result.output
        assert "15 cells" in result.output
        assert "disjoint: True" in result.output
        assert "covered: True" in result.output
        assert "dataset: 705 rows" in result.output

    def test_identifiability_echo(self, runner, args):
        result = runner.invoke(
            main, ["validate", *args, "--covariates", "odn,log_vl"]
        )
        assert result.exit_code == 0, result.output
        assert "identifiable with 2 covariates: True" in result.output


class TestFit:
    def test_writes_fit_json(self, runner, args, tmp_path):
        result = runner.invoke(
            main,
            ["fit", *args, "--covariates", "odn", "--p1", "0.126",
             "--out", str(tmp_path)],
        )
        assert result.exit_code == 0, result.output
        record = json.loads((tmp_path / "fit.json").read_text())
        assert set(record["coefficients"]) == {"intercept", "odn"}
        assert len(record["config_sha256"]) == 64
        assert record["imputations"] == 1
        assert record["per_imputation"][0]["converged"] is True
        assert record["config"]["p1"] == 0.126
        assert "intercept:" in result.output

    def test_requires_covariates(self, runner, args, tmp_path):
        result = runner.invoke(main, ["fit", *args, "--out", str(tmp_path)])
        assert result.exit_code == 1
        record = json.loads(result.stderr.strip().splitlines()[-1])
        assert record["error"] == "ConfigError"
        assert record["exit_code"] == 1

    def test_unknown_covariate_is_validation_error(self, runner, args, tmp_path):
        result = runner.invoke(
            main, ["fit", *args, "--covariates", "nope", "--out", str(tmp_path)]
        )
        assert result.exit_code == 1
        record = json.loads(result.stderr.strip().splitlines()[-1])
        assert record["error"] == "UnknownCovariate"
        assert record["exit_code"] == 1
        assert "nope" in record["message"]
        assert not (tmp_path / "fit.json").exists()


class TestSelect:
    def test_selection_record(self, runner, args, tmp_path):
        result = runner.invoke(
            main,
            ["select", *args, "--covariates", "odn,log_vl,cd4_z",
             "--criterion", "bic", "--imputations", "2", "--p1", "0.126",
             "--out", str(tmp_path)],
        )
        assert result.exit_code == 0, result.output
        record = json.loads((tmp_path / "selection.json").read_text())
        assert record["criterion"] == "bic"
        assert len(record["per_imputation_selected"]) == 2
        assert isinstance(record["selection_counts"], dict)
        assert record["imputations"] == 2
        assert "selected (bic):" in result.output


class TestPredict:
    def test_predictions_csv_with_recency(self, runner, args, tmp_path):
        result = runner.invoke(
            main,
            ["predict", *args, "--covariates", "odn", "--p1", "0.126",
             "--out", str(tmp_path)],
        )
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "predictions.csv").read_text().splitlines()
        assert lines[0] == "row,probability,recent"
        assert len(lines) == 706
        probs = [float(line.split(",")[1]) for line in lines[1:]]
        assert all(0.0 <= p <= 1.0 for p in probs)


class TestAggregate:
    def test_groups_csv_and_figure(self, runner, args, tmp_path):
        result = runner.invoke(
            main,
            ["aggregate", *args, "--covariates", "odn", "--p1", "0.126",
             "--groups", "region", "--out", str(tmp_path)],
        )
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "groups.csv").read_text().splitlines()
        assert lines[0] == "group,n,weight_share,probability,recent_share"
        labels = [line.split(",")[0] for line in lines[1:]]
        assert labels == ["overall", "east", "north", "south", "west"]
        png = (tmp_path / "groups.png").read_bytes()
        assert png[:8] == b"\x89PNG\r\n\x1a\n"
        assert "overall:" in result.output

    def test_unknown_scheme_cleans_up(self, runner, args, tmp_path):
        result = runner.invoke(
            main,
            ["aggregate", *args, "--covariates", "odn",
             "--groups", "clinic", "--out", str(tmp_path)],
        )
        assert result.exit_code == 1
        record = json.loads(result.stderr.strip().splitlines()[-1])
        assert record["error"] == "EmptyGroup"
        assert list(tmp_path.iterdir()) == []


class TestBootstrap:
    def test_intervals_written_and_deterministic(self, runner, args, tmp_path):
        cmd = ["bootstrap", *args, "--covariates", "odn", "--p1", "0.126",
               "--groups", "sex", "--bootstrap", "25"]
        out1, out2 = tmp_path / "a", tmp_path / "b"
        first = runner.invoke(main, cmd + ["--out", str(out1)])
        assert first.exit_code == 0, first.output
        record = json.loads((out1 / "bootstrap.json").read_text())
        labels = [iv["group"] for iv in record["intervals"]]
        assert labels == ["overall", "f", "m"]
        for iv in record["intervals"][1:]:
            assert iv["lower"] <= iv["estimate"] <= iv["upper"]
        assert record["replicates"] == 25
        lines = (out1 / "groups.csv").read_text().splitlines()
        assert lines[0].endswith(",ci_lower,ci_upper")

        second = runner.invoke(main, cmd + ["--out", str(out2)])
        assert second.exit_code == 0, second.output
        assert (out1 / "bootstrap.json").read_bytes() == (out2 / "bootstrap.json").read_bytes()
        assert (out1 / "groups.csv").read_bytes() == (out2 / "groups.csv").read_bytes()


class TestSimulate:
    def small_config(self, tmp_path):
        config = {
            "population": {"n": 800, "seed": 7},
            "truth": {"covariates": ["odn"], "slopes": [-1.0], "p1": 0.126},
            "partition": {
                "covariate": "odn",
                "edges": [1.0, 1.25, 1.5, 1.75, 2.0],
                "domain": [0.0, None],
            },
            "sample_p1": 0.21,
            "table_size": 4733,
            "replicates": 5,
            "seed": 11,
        }
        path = tmp_path / "study.json"
        path.write_text(json.dumps(config))
        return path

    def test_study_record(self, runner, tmp_path):
        config = self.small_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        result = runner.invoke(
            main, ["simulate", "--config", str(config), "--out", str(out1)]
        )
        assert result.exit_code == 0, result.output
        record = json.loads((out1 / "simulation.json").read_text())
        assert record["replicates"] == 5
        assert len(record["mae_model"]) == 5
        assert record["model_mae_mean"] < record["categorical_mae_mean"]
        assert record["failed_model"] == 0
        assert "model MAE" in result.output

        again = runner.invoke(
            main, ["simulate", "--config", str(config), "--out", str(out2)]
        )
        assert again.exit_code == 0
        assert (out1 / "simulation.json").read_bytes() == (out2 / "simulation.json").read_bytes()

    def test_tiny_tables_abort_numerically(self, runner, tmp_path):
        # Three labeled draws rarely cover both labels, so replicate tables
        # keep failing until the failure budget trips.
        config = {
            "population": {"n": 400, "seed": 7},
            "truth": {"covariates": ["odn"], "slopes": [-1.0], "p1": 0.126},
            "partition": {"covariate": "odn", "edges": [1.5], "domain": [0.0, None]},
            "sample_p1": 0.21,
            "table_size": 3,
            "replicates": 10,
            "seed": 11,
        }
        path = tmp_path / "study.json"
        path.write_text(json.dumps(config))
        out = tmp_path / "out"
        result = runner.invoke(
            main, ["simulate", "--config", str(path), "--out", str(out)]
        )
        assert result.exit_code == 2
        record = json.loads(result.stderr.strip().splitlines()[-1])
        assert record["error"] == "TooManyFailedReplicates"
        assert record["exit_code"] == 2
        assert not (out / "simulation.json").exists()

    def test_bad_config_rejected(self, runner, tmp_path):
        path = tmp_path / "study.json"
        path.write_text(json.dumps({"truth": {}}))
        result = runner.invoke(
            main, ["simulate", "--config", str(path), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 1
        record = json.loads(result.stderr.strip().splitlines()[-1])
        assert record["error"] == "ConfigError"


class TestPlotData:
    def test_scatter_written(self, runner, args, tmp_path):
        result = runner.invoke(
            main,
            ["plot-data", *args, "--covariates", "odn", "--p1", "0.126",
             "--out", str(tmp_path)],
        )
        assert result.exit_code == 0, result.output
        png = (tmp_path / "data.png").read_bytes()
        assert png[:8] == b"\x89PNG\r\n\x1a\n"

    def test_without_model_coloring(self, runner, args, tmp_path):
        result = runner.invoke(main, ["plot-data", *args, "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "data.png").exists()


class TestWorkspace:
    def test_discard_removes_written_files(self, tmp_path):
        ws = Workspace(tmp_path / "out")
        a = ws.path("a.txt")
        b = ws.path("b.txt")
        a.write_text("x")
        b.write_text("y")
        ws.discard()
        assert not a.exists() and not b.exists()

    def test_discard_tolerates_never_written(self, tmp_path):
        ws = Workspace(tmp_path / "out")
        ws.path("never.txt")
        ws.discard()
