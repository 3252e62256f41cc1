"""Forward stepwise covariate selection with multiple imputation.

Selection walks forward from the intercept-only model, adding whichever
candidate lowers the information criterion most, and stops when no
candidate achieves a strict decrease. With missing covariate values the
whole procedure runs once per imputed dataset; covariates picked by at
least half the imputations form the consensus model, which is then refit
on every imputation and pooled.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import ContingencyTable, IndividualDataset
from .errors import (
    FailedFitWarning,
    InsufficientCompleteRows,
    NumericalFailure,
    ValidationFailure,
)
from .estimation import FitResult, fit_model
from .likelihood import predict_probabilities
from .rng import TAG_IMPUTATION, substream

CRITERIA = ("aic", "bic")


def _criterion_value(fit: FitResult, criterion: str) -> float:
    if criterion not in CRITERIA:
        raise ValidationFailure(f"criterion must be one of {CRITERIA}, got '{criterion}'")
    return fit.aic if criterion == "aic" else fit.bic


# -- multiple imputation -----------------------------------------------------


def _impute_column(dataset: IndividualDataset, target: str, rng) -> np.ndarray:
    """Posterior-predictive draws for one covariate's missing entries.

    Fits a normal linear regression of the target on every fully observed
    covariate (flat prior): draw the error variance from its scaled
    inverse-chi-square posterior, the coefficients from their conditional
    normal, then sample missing values from the predictive distribution.
    """
    j = dataset.column_index(target)
    y = dataset.values[:, j]
    missing = np.isnan(y)
    predictors = [
        c
        for c in dataset.covariate_names
        if c != target and not np.any(np.isnan(dataset.column(c)))
    ]
    X = np.column_stack(
        [np.ones(dataset.n)] + [dataset.column(c) for c in predictors]
    )
    obs = ~missing
    q = X.shape[1]
    n_obs = int(obs.sum())
    dof = n_obs - q
    if n_obs < q + 2:
        raise InsufficientCompleteRows(
            f"covariate '{target}': {n_obs} complete rows cannot support a "
            f"regression on {q} coefficients"
        )
    Xo, yo = X[obs], y[obs]
    XtX = Xo.T @ Xo
    coef, *_ = np.linalg.lstsq(Xo, yo, rcond=None)
    resid = yo - Xo @ coef
    ssr = float(resid @ resid)

    sigma2 = ssr / rng.chisquare(dof)
    XtX_inv = np.linalg.inv(XtX)
    L = np.linalg.cholesky(sigma2 * XtX_inv)
    coef_draw = coef + L @ rng.standard_normal(q)
    out = y.copy()
    out[missing] = X[missing] @ coef_draw + np.sqrt(sigma2) * rng.standard_normal(
        int(missing.sum())
    )
    return out


def impute_datasets(dataset: IndividualDataset, J: int, seed: int) -> list[IndividualDataset]:
    """J completed copies of the dataset.

    Covariates are imputed independently, each from its own regression on
    the fully observed covariates. A dataset with nothing missing comes
    back as J references to itself, which keeps downstream code uniform.
    """
    if J < 1:
        raise ValidationFailure(f"imputation count must be at least 1, got {J}")
    targets = [c for c in dataset.covariate_names if np.any(np.isnan(dataset.column(c)))]
    if not targets:
        return [dataset] * J
    out = []
    for j in range(J):
        rng = substream(seed, TAG_IMPUTATION, j)
        completed = dataset
        for target in targets:
            completed = completed.with_column(target, _impute_column(dataset, target, rng))
        out.append(completed)
    return out


# -- forward stepwise --------------------------------------------------------


@dataclass
class StepwiseStep:
    added: str | None
    criterion_value: float
    candidate_values: dict = field(default_factory=dict)


@dataclass
class StepwiseResult:
    criterion: str
    selected: tuple
    steps: list


def stepwise(
    dataset: IndividualDataset,
    tables: list[ContingencyTable],
    candidates,
    criterion: str = "aic",
    **fit_kwargs,
) -> StepwiseResult:
    """Forward selection from the intercept-only model.

    Each round fits every not-yet-included candidate, in the given order,
    and adds the first one attaining the lowest criterion value, provided
    it strictly beats the current model. Candidates whose fit fails are
    skipped with a warning and stay eligible for later rounds.
    """
    candidates = list(candidates)
    fit_kwargs = {**fit_kwargs, "compute_covariance": False}
    base = fit_model(dataset, tables, (), **fit_kwargs)
    current = _criterion_value(base, criterion)
    selected: list[str] = []
    steps = [StepwiseStep(added=None, criterion_value=current)]

    while True:
        remaining = [c for c in candidates if c not in selected]
        if not remaining:
            break
        scores = {}
        for c in remaining:
            try:
                fit = fit_model(dataset, tables, (*selected, c), **fit_kwargs)
            except (NumericalFailure, ValidationFailure) as exc:
                warnings.warn(
                    f"candidate '{c}' skipped: {exc}", FailedFitWarning, stacklevel=2
                )
                continue
            scores[c] = _criterion_value(fit, criterion)
        if not scores:
            break
        best = min(scores, key=lambda c: (scores[c], remaining.index(c)))
        if scores[best] < current:
            selected.append(best)
            current = scores[best]
            steps.append(StepwiseStep(best, current, dict(scores)))
        else:
            steps.append(StepwiseStep(None, current, dict(scores)))
            break
    return StepwiseResult(criterion=criterion, selected=tuple(selected), steps=steps)


# -- pooling across imputations ----------------------------------------------


@dataclass
class PooledFit:
    """Consensus model refit on every imputation and pooled.

    ``beta`` is the mean of the per-imputation coefficient vectors;
    variances combine the mean within-imputation variance with the
    between-imputation spread inflated by (1 + 1/J).
    """

    covariates: tuple
    beta: np.ndarray
    standard_errors: np.ndarray
    within_variance: np.ndarray
    between_variance: np.ndarray
    total_variance: np.ndarray
    fits: list
    datasets: list
    selection_counts: dict
    per_imputation_selected: list
    criterion: str

    @property
    def J(self) -> int:
        return len(self.fits)

    def coefficients(self) -> dict:
        out = {"intercept": float(self.beta[0])}
        out.update({c: float(b) for c, b in zip(self.covariates, self.beta[1:])})
        return out

    def predict(self, dataset: IndividualDataset | None = None) -> np.ndarray:
        """Mean of per-imputation predictions.

        Without an argument, each imputation predicts on its own completed
        dataset; an explicit dataset (complete in the model covariates) is
        scored by every imputation's coefficients instead.
        """
        per = []
        for fit, ds in zip(self.fits, self.datasets):
            data = dataset if dataset is not None else ds
            per.append(predict_probabilities(fit.beta, data.design(self.covariates)))
        return np.mean(per, axis=0)


def pool_fits(fits: list[FitResult], criterion: str = "aic", **meta) -> PooledFit:
    betas = np.array([f.beta for f in fits])
    J = len(fits)
    beta = betas.mean(axis=0)
    if all(f.covariance is not None for f in fits):
        within = np.array([np.diag(f.covariance) for f in fits]).mean(axis=0)
    else:
        within = np.full_like(beta, np.nan)
    between = betas.var(axis=0, ddof=1) if J > 1 else np.zeros_like(beta)
    total = within + (1.0 + 1.0 / J) * between
    return PooledFit(
        covariates=fits[0].covariates,
        beta=beta,
        standard_errors=np.sqrt(total),
        within_variance=within,
        between_variance=between,
        total_variance=total,
        fits=fits,
        datasets=meta.get("datasets", []),
        selection_counts=meta.get("selection_counts", {}),
        per_imputation_selected=meta.get("per_imputation_selected", []),
        criterion=criterion,
    )


def select_and_fit(
    dataset: IndividualDataset,
    tables: list[ContingencyTable],
    candidates,
    criterion: str = "aic",
    imputations: int = 1,
    seed: int = 0,
    p1: float | None = None,
    **fit_kwargs,
) -> PooledFit:
    """Impute, select per imputation, refit the consensus, pool.

    The consensus keeps covariates chosen by at least half the imputations
    (threshold (J+1)//2, so an exact tie at J/2 keeps the covariate), in
    candidate order. Each consensus refit carries its own covariance and,
    when requested, its own calibrated intercept; pooling averages the
    calibrated vectors.
    """
    candidates = list(candidates)
    datasets = impute_datasets(dataset, imputations, seed)
    per_selected = [
        stepwise(ds, tables, candidates, criterion, **fit_kwargs).selected for ds in datasets
    ]
    counts = {c: sum(c in sel for sel in per_selected) for c in candidates}
    threshold = (len(datasets) + 1) // 2
    consensus = tuple(c for c in candidates if counts[c] >= threshold)
    fits = [
        fit_model(ds, tables, consensus, p1=p1, **fit_kwargs) for ds in datasets
    ]
    return pool_fits(
        fits,
        criterion,
        datasets=datasets,
        selection_counts=counts,
        per_imputation_selected=per_selected,
    )
