"""Command-line interface.

Every command reads a delimited dataset plus JSON manifest and one or more
table JSON files, writes its outputs under --out, and reports failures as
a single JSON record on stderr: exit code 1 for invalid inputs, 2 for
numerical breakdowns. Partial output files are removed on failure so a
nonzero exit never leaves half-written results behind.
"""

from __future__ import annotations

import functools
import json
import sys
import warnings
from pathlib import Path

import click
import numpy as np

from .data import (
    banded_partition,
    check_identifiability,
    crossed_partition,
    validate_partition,
)
from .errors import ConfigError, CtlogitError, ValidationFailure
from .estimation import fit_model
from .inference import aggregate_groups, bootstrap_groups, overall_estimate
from .io import (
    config_hash,
    load_dataset,
    load_table,
    recency_rule,
    write_group_estimates,
    write_json,
    write_predictions,
)
from .selection import impute_datasets, pool_fits, select_and_fit
from .simulation import (
    ColumnSpec,
    StudyConfig,
    TruthSpec,
    run_study,
    synthetic_dataset,
)


_ACTIVE_WORKSPACES: list = []


class Workspace:
    """Tracks files written by one command so failures can clean up."""

    def __init__(self, out):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []
        _ACTIVE_WORKSPACES.append(self)

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.written.append(p)
        return p

    def discard(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)


def guarded(f):
    """Convert library failures into the structured stderr record and drop
    any partially written outputs."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        _ACTIVE_WORKSPACES.clear()
        try:
            return f(*args, **kwargs)
        except CtlogitError as exc:
            for ws in _ACTIVE_WORKSPACES:
                ws.discard()
            code = 1 if isinstance(exc, ValidationFailure) else 2
            record = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
            click.echo(json.dumps(record, sort_keys=True), err=True)
            sys.exit(code)
        finally:
            _ACTIVE_WORKSPACES.clear()

    return wrapper


def data_options(f):
    f = click.option("--data", required=True, type=click.Path(exists=True), help="Delimited dataset file.")(f)
    f = click.option("--manifest", required=True, type=click.Path(exists=True), help="Dataset manifest JSON.")(f)
    f = click.option("--table", "tables", required=True, multiple=True, type=click.Path(exists=True), help="Table JSON; repeatable.")(f)
    return f


def model_options(f):
    f = click.option("--covariates", default=None, help="Comma-separated model covariates.")(f)
    f = click.option("--p1", type=float, default=None, help="External marginal to calibrate the intercept to.")(f)
    f = click.option("--imputations", type=int, default=1, show_default=True, help="Completed datasets to average over when covariates have missing values.")(f)
    f = click.option("--seed", type=int, default=0, show_default=True, help="Master seed for all randomized steps.")(f)
    return f


def _split_covariates(text):
    if text is None:
        return None
    out = tuple(c.strip() for c in text.split(",") if c.strip())
    if not out:
        raise ConfigError("--covariates was given but names no columns")
    return out


def _load_inputs(data, manifest, tables):
    dataset, man = load_dataset(data, manifest)
    loaded = [load_table(t) for t in tables]
    return dataset, man, loaded


def _pooled_fit(dataset, tables, covariates, p1, imputations, seed):
    """Fit on each completed dataset and pool; trivial pooling when the
    data are already complete."""
    datasets = impute_datasets(dataset, imputations, seed)
    fits = [fit_model(ds, tables, covariates, p1=p1) for ds in datasets]
    return pool_fits(fits, datasets=datasets)


def _fit_record(pooled, config):
    per = [
        {
            "aic": f.aic,
            "bic": f.bic,
            "converged": f.converged,
            "iterations": f.iterations,
            "log_likelihood": f.log_likelihood,
            "uncalibrated_intercept": f.beta0_uncalibrated,
        }
        for f in pooled.fits
    ]
    return {
        "config": config,
        "config_sha256": config_hash(config),
        "covariates": list(pooled.covariates),
        "coefficients": pooled.coefficients(),
        "standard_errors": {
            name: se
            for name, se in zip(
                ["intercept", *pooled.covariates], pooled.standard_errors
            )
        },
        "imputations": pooled.J,
        "per_imputation": per,
        "between_variance": pooled.between_variance,
        "within_variance": pooled.within_variance,
    }


@click.group()
@click.version_option()
def main():
    """Fit individual-level logistic models from aggregated label counts."""


@main.command()
@data_options
@click.option("--covariates", default=None, help="Covariates to check identifiability for.")
@guarded
def validate(data, manifest, tables, covariates):
    """Check the dataset, manifest, and tables against each other."""
    dataset, man, loaded = _load_inputs(data, manifest, tables)
    covs = _split_covariates(covariates)
    failures = []
    for table in loaded:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report = validate_partition(table.partition, dataset)
        click.echo(f"table '{table.name}': {table.partition.n_cells} cells")
        click.echo(f"  disjoint: {report.disjoint}  covered: {report.covered}")
        click.echo(f"  occupancy: {report.occupancy.tolist()}")
        for msg in report.problems:
            click.echo(f"  problem: {msg}")
        for w in caught:
            click.echo(f"  note: {w.message}")
        if not report.ok:
            failures.append(table.name)
        if covs is not None:
            ok = check_identifiability(table.partition, 1 + len(covs))
            click.echo(f"  identifiable with {len(covs)} covariates: {ok}")
    click.echo(f"dataset: {dataset.n} rows, {dataset.p} covariates")
    if failures:
        raise ValidationFailure(f"invalid tables: {', '.join(failures)}")


@main.command()
@data_options
@model_options
@click.option("--out", default=".", show_default=True, type=click.Path(), help="Output directory.")
@guarded
def fit(data, manifest, tables, covariates, p1, imputations, seed, out):
    """Fit coefficients and write fit.json."""
    ws = Workspace(out)
    dataset, man, loaded = _load_inputs(data, manifest, tables)
    covs = _split_covariates(covariates)
    if covs is None:
        raise ConfigError("fit requires --covariates")
    config = {
        "command": "fit", "covariates": list(covs), "data": str(data),
        "imputations": imputations, "manifest": str(manifest), "p1": p1,
        "seed": seed, "tables": [str(t) for t in tables],
    }
    pooled = _pooled_fit(dataset, loaded, covs, p1, imputations, seed)
    write_json(_fit_record(pooled, config), ws.path("fit.json"))
    for name, value in pooled.coefficients().items():
        click.echo(f"{name}: {value:.6g}")
    return ws


@main.command()
@data_options
@model_options
@click.option("--criterion", type=click.Choice(["aic", "bic"]), default="aic", show_default=True)
@click.option("--out", default=".", show_default=True, type=click.Path())
@guarded
def select(data, manifest, tables, covariates, p1, imputations, seed, criterion, out):
    """Stepwise covariate selection; writes selection.json."""
    ws = Workspace(out)
    dataset, man, loaded = _load_inputs(data, manifest, tables)
    candidates = _split_covariates(covariates) or dataset.covariate_names
    config = {
        "command": "select", "candidates": list(candidates), "criterion": criterion,
        "data": str(data), "imputations": imputations, "manifest": str(manifest),
        "p1": p1, "seed": seed, "tables": [str(t) for t in tables],
    }
    pooled = select_and_fit(
        dataset, loaded, candidates, criterion=criterion,
        imputations=imputations, seed=seed, p1=p1,
    )
    record = _fit_record(pooled, config)
    record["criterion"] = criterion
    record["selection_counts"] = pooled.selection_counts
    record["per_imputation_selected"] = [list(s) for s in pooled.per_imputation_selected]
    write_json(record, ws.path("selection.json"))
    click.echo(f"selected ({criterion}): {', '.join(pooled.covariates) or '(intercept only)'}")
    for name, value in pooled.coefficients().items():
        click.echo(f"{name}: {value:.6g}")
    return ws


@main.command()
@data_options
@model_options
@click.option("--out", default=".", show_default=True, type=click.Path())
@guarded
def predict(data, manifest, tables, covariates, p1, imputations, seed, out):
    """Write row-level predicted probabilities to predictions.csv."""
    ws = Workspace(out)
    dataset, man, loaded = _load_inputs(data, manifest, tables)
    covs = _split_covariates(covariates)
    if covs is None:
        raise ConfigError("predict requires --covariates")
    pooled = _pooled_fit(dataset, loaded, covs, p1, imputations, seed)
    probs = pooled.predict()
    rule = recency_rule(man)
    recent = rule.classify(dataset) if rule is not None else None
    write_predictions(ws.path("predictions.csv"), probs, recent)
    click.echo(f"wrote {dataset.n} predictions")
    return ws


def _aggregate_outputs(ws, dataset, man, pooled, groups_scheme, boot):
    from .plotting import plot_group_estimates

    probs = pooled.predict()
    rule = recency_rule(man)
    recent = rule.classify(dataset) if rule is not None else None
    estimates = [overall_estimate(dataset, probs, recent)]
    if groups_scheme is not None:
        estimates += aggregate_groups(dataset, probs, groups_scheme, recent)
    intervals = None
    if boot is not None:
        intervals = [boot.overall, *boot.groups]
    write_group_estimates(ws.path("groups.csv"), estimates, intervals)
    plot_group_estimates(estimates, intervals, ws.path("groups.png"))
    return estimates


@main.command()
@data_options
@model_options
@click.option("--groups", "groups_scheme", default=None, help="Group scheme from the manifest.")
@click.option("--out", default=".", show_default=True, type=click.Path())
@guarded
def aggregate(data, manifest, tables, covariates, p1, imputations, seed, groups_scheme, out):
    """Group-level weighted mean probabilities; groups.csv and groups.png."""
    ws = Workspace(out)
    dataset, man, loaded = _load_inputs(data, manifest, tables)
    covs = _split_covariates(covariates)
    if covs is None:
        raise ConfigError("aggregate requires --covariates")
    pooled = _pooled_fit(dataset, loaded, covs, p1, imputations, seed)
    estimates = _aggregate_outputs(ws, dataset, man, pooled, groups_scheme, None)
    for est in estimates:
        click.echo(f"{est.label}: {est.probability:.6g}")
    return ws


@main.command()
@data_options
@model_options
@click.option("--groups", "groups_scheme", default=None, help="Group scheme from the manifest.")
@click.option("--bootstrap", "replicates", type=int, default=500, show_default=True, help="Bootstrap replicates.")
@click.option("--out", default=".", show_default=True, type=click.Path())
@guarded
def bootstrap(data, manifest, tables, covariates, p1, imputations, seed, groups_scheme, replicates, out):
    """Group estimates with bootstrap intervals; adds bootstrap.json."""
    ws = Workspace(out)
    dataset, man, loaded = _load_inputs(data, manifest, tables)
    covs = _split_covariates(covariates)
    if covs is None:
        raise ConfigError("bootstrap requires --covariates")
    if replicates < 1:
        raise ConfigError("--bootstrap must be at least 1")
    config = {
        "command": "bootstrap", "covariates": list(covs), "data": str(data),
        "groups": groups_scheme, "imputations": imputations, "manifest": str(manifest),
        "p1": p1, "replicates": replicates, "seed": seed,
        "tables": [str(t) for t in tables],
    }
    complete = impute_datasets(dataset, 1, seed)[0] if imputations >= 1 else dataset
    fit_full = fit_model(complete, loaded, covs, p1=p1)
    result = bootstrap_groups(
        complete, loaded, fit_full, replicates, seed, scheme=groups_scheme,
        recency=None,
    )
    pooled = pool_fits([fit_full], datasets=[complete])
    estimates = _aggregate_outputs(ws, complete, man, pooled, groups_scheme, result)
    record = {
        "config": config,
        "config_sha256": config_hash(config),
        "failed_replicates": result.failed,
        "intervals": [
            {"group": g.label, "estimate": g.estimate, "lower": g.lower,
             "upper": g.upper, "replicates": g.n_replicates}
            for g in [result.overall, *result.groups]
        ],
        "merge_events": result.merge_events,
        "replicates": result.replicates,
    }
    write_json(record, ws.path("bootstrap.json"))
    for g in [result.overall, *result.groups]:
        click.echo(f"{g.label}: {g.estimate:.6g} [{g.lower:.6g}, {g.upper:.6g}]")
    return ws


def _study_from_config(obj):
    for key in ("truth", "partition", "sample_p1", "table_size", "replicates"):
        if key not in obj:
            raise ConfigError(f"study config needs '{key}'")
    truth = obj["truth"]
    for key in ("covariates", "slopes", "p1"):
        if key not in truth:
            raise ConfigError(f"study truth needs '{key}'")
    part = obj["partition"]
    if "covariate" not in part or "edges" not in part:
        raise ConfigError("study partition needs 'covariate' and 'edges'")
    domain = part.get("domain", [None, None])
    lo = -np.inf if domain[0] is None else float(domain[0])
    hi = np.inf if domain[1] is None else float(domain[1])
    partition = banded_partition(part["covariate"], part["edges"], domain=(lo, hi))
    cross = part.get("cross")
    if cross is not None:
        cdomain = cross.get("domain", [None, None])
        clo = -np.inf if cdomain[0] is None else float(cdomain[0])
        chi = np.inf if cdomain[1] is None else float(cdomain[1])
        partition = crossed_partition(
            partition, cross["covariate"], float(cross["split"]), domain=(clo, chi)
        )
    return partition, truth


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True), help="Study configuration JSON.")
@click.option("--seed", type=int, default=None, help="Overrides the config seed.")
@click.option("--out", default=".", show_default=True, type=click.Path())
@guarded
def simulate(config_path, seed, out):
    """Run a replicated accuracy study; writes simulation.json."""
    ws = Workspace(out)
    try:
        obj = json.loads(Path(config_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read study config: {exc}") from exc
    partition, truth = _study_from_config(obj)
    pop = obj.get("population", {})
    columns = tuple(
        ColumnSpec(c["name"], c["kind"], tuple(c["params"]))
        for c in pop.get("columns", [])
    ) or None
    kwargs = {} if columns is None else {"columns": columns}
    dataset = synthetic_dataset(
        int(pop.get("n", 5000)), int(pop.get("seed", 0)), **kwargs
    )
    config = StudyConfig(
        truth=TruthSpec(tuple(truth["covariates"]), tuple(truth["slopes"]), float(truth["p1"])),
        partition=partition,
        sample_p1=float(obj["sample_p1"]),
        table_size=int(obj["table_size"]),
        replicates=int(obj["replicates"]),
        seed=int(seed if seed is not None else obj.get("seed", 0)),
    )
    result = run_study(dataset, config)
    record = {
        "config_sha256": config_hash(obj),
        "categorical_mae_mean": result.categorical_mean,
        "categorical_mae_sd": result.categorical_sd,
        "failed_categorical": result.failed_categorical,
        "failed_model": result.failed_model,
        "mae_categorical": result.mae_categorical,
        "mae_model": result.mae_model,
        "model_mae_mean": result.model_mean,
        "model_mae_sd": result.model_sd,
        "replicates": config.replicates,
        "share_model_better": result.share_model_better,
    }
    write_json(record, ws.path("simulation.json"))
    click.echo(
        f"model MAE {result.model_mean:.4f} ({result.model_sd:.4f}), "
        f"categorical MAE {result.categorical_mean:.4f} ({result.categorical_sd:.4f}), "
        f"model better in {result.share_model_better:.1%}"
    )
    return ws


@main.command("plot-data")
@data_options
@model_options
@click.option("--out", default=".", show_default=True, type=click.Path())
@guarded
def plot_data_cmd(data, manifest, tables, covariates, p1, imputations, seed, out):
    """Scatter the recency-rule covariates, colored by fitted probability."""
    from .plotting import plot_data

    ws = Workspace(out)
    dataset, man, loaded = _load_inputs(data, manifest, tables)
    rule = recency_rule(man)
    if rule is None:
        raise ConfigError("manifest has no 'bct' block naming the rule covariates")
    covs = _split_covariates(covariates)
    probs = None
    if covs is not None:
        pooled = _pooled_fit(dataset, loaded, covs, p1, imputations, seed)
        probs = pooled.predict()
    plot_data(dataset, rule, probs, ws.path("data.png"))
    click.echo("wrote data.png")
    return ws


if __name__ == "__main__":
    main()
