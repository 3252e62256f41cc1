"""Model fitting, curvature-based uncertainty, and intercept calibration.

Fitting maximizes the aggregate-count likelihood over all coefficients
jointly, starting from zero. Because the labeled counts usually come from
a sample whose positive-class share differs from the population marginal,
the fitted intercept is biased; :func:`calibrate_intercept` replaces it so
that the weighted mean of the row-level predictions matches an externally
supplied marginal. Slopes are left untouched by calibration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import ContingencyTable, IndividualDataset, MarginalTarget
from .errors import (
    BracketFailure,
    IdentifiabilityWarning,
    NonNegativeDefiniteViolation,
    SingularHessian,
)
from .likelihood import AggregateLikelihood, sigmoid
from .optimize import (
    DEFAULT_INITIAL_STEP,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_RELTOL,
    DEFAULT_RESTARTS,
    bisect,
    finite_difference_hessian,
    nelder_mead,
)

DEFAULT_HESSIAN_STEP = 1e-4
CALIBRATION_TOL = 1e-10
CALIBRATION_BRACKET = 50.0
MAX_CONDITION_NUMBER = 1e12


@dataclass
class FitResult:
    """A fitted model: coefficients, uncertainty, and fit diagnostics.

    ``beta`` is intercept-first over ``covariates``. When a marginal target
    was supplied the intercept is the calibrated one and
    ``beta0_uncalibrated`` preserves the raw optimum; ``log_likelihood``,
    ``aic`` and ``bic`` always refer to the raw optimum, since calibration
    deliberately moves the intercept off it.
    """

    covariates: tuple
    beta: np.ndarray
    beta0_uncalibrated: float
    log_likelihood: float
    covariance: np.ndarray | None
    standard_errors: np.ndarray | None
    condition_number: float | None
    converged: bool
    iterations: int
    function_evaluations: int
    clamp_events: int
    total_count: float
    p1: float | None = None

    @property
    def n_coefficients(self) -> int:
        return self.beta.size

    @property
    def aic(self) -> float:
        return 2.0 * self.n_coefficients - 2.0 * self.log_likelihood

    @property
    def bic(self) -> float:
        return self.n_coefficients * float(np.log(self.total_count)) - 2.0 * self.log_likelihood

    @property
    def calibrated(self) -> bool:
        return self.p1 is not None

    def coefficients(self) -> dict:
        out = {"intercept": float(self.beta[0])}
        out.update({c: float(b) for c, b in zip(self.covariates, self.beta[1:])})
        return out


def check_identifiability_total(tables: list[ContingencyTable], n_coefficients: int) -> bool:
    """Each table with K cells contributes 2K - 1 free probabilities; the
    pooled tables must offer at least as many as there are coefficients."""
    dof = sum(2 * t.partition.n_cells - 1 for t in tables)
    ok = dof >= n_coefficients
    if not ok:
        warnings.warn(
            f"{len(tables)} table(s) support at most {dof} coefficients but the "
            f"model has {n_coefficients}; estimates may not be identifiable",
            IdentifiabilityWarning,
            stacklevel=2,
        )
    return ok


def _covariance_from_hessian(loglik, beta_hat: np.ndarray, step: float):
    """Invert the negated finite-difference Hessian of the log-likelihood.

    Returns (covariance, standard_errors, condition_number). Non-positive
    variance estimates warn and yield NaN standard errors for the affected
    coordinates instead of failing the whole fit.
    """
    H = finite_difference_hessian(loglik, beta_hat, step=step)
    info = -H
    cond = float(np.linalg.cond(info))
    if not np.isfinite(cond) or cond > MAX_CONDITION_NUMBER:
        raise SingularHessian(
            f"information matrix is singular or near-singular (condition number {cond:.3e})",
            condition_number=cond,
        )
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise SingularHessian(
            f"information matrix could not be inverted: {exc}", condition_number=cond
        ) from exc
    diag = np.diag(cov)
    se = np.sqrt(np.where(diag > 0, diag, np.nan))
    if np.any(diag <= 0):
        bad = [int(j) for j in np.flatnonzero(diag <= 0)]
        warnings.warn(
            f"covariance diagonal non-positive at coordinates {bad}; "
            "the optimum may be flat or not a maximum along them",
            NonNegativeDefiniteViolation,
            stacklevel=2,
        )
    return cov, se, cond


def solve_offset(base_logits: np.ndarray, weights: np.ndarray, p1: float) -> float:
    """Constant c with sum_i w_i * sigmoid(base_i + c) = p1, for normalized
    weights. The map is strictly increasing in c, so bisection on an
    expandable bracket converges unconditionally when p1 is attainable."""
    target = MarginalTarget(p1).p1

    def g(c):
        return float(weights @ sigmoid(base_logits + c)) - target

    root = bisect(g, -CALIBRATION_BRACKET, CALIBRATION_BRACKET, tol=CALIBRATION_TOL)
    if root is None:
        raise BracketFailure(
            f"no intercept in an expandable bracket reaches marginal {target}; "
            "predictions may be numerically saturated"
        )
    return float(root)


def calibrate_intercept(
    beta: np.ndarray, X: np.ndarray, weights: np.ndarray, p1: float
) -> np.ndarray:
    """Replace beta[0] so the weighted mean prediction equals p1."""
    beta = np.asarray(beta, dtype=float)
    base = X @ beta[1:]
    out = beta.copy()
    out[0] = solve_offset(base, weights, p1)
    return out


def solve_intercept_for_marginal(
    slopes: np.ndarray, X: np.ndarray, weights: np.ndarray, p1: float
) -> float:
    """Intercept that pairs given slopes with a target weighted marginal."""
    return solve_offset(X @ np.asarray(slopes, dtype=float), weights, p1)


def fit_likelihood(
    lik: AggregateLikelihood,
    p1: float | None = None,
    start: np.ndarray | None = None,
    reltol: float = DEFAULT_RELTOL,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    restarts: int = DEFAULT_RESTARTS,
    initial_step: float = DEFAULT_INITIAL_STEP,
    hessian_step: float = DEFAULT_HESSIAN_STEP,
    compute_covariance: bool = True,
) -> FitResult:
    """Fit an already-bound likelihood; core of :func:`fit_model`.

    Bootstrap replicates call this directly with merged-cell likelihoods
    and a warm start at the full-data optimum.
    """
    x0 = np.zeros(lik.n_coefficients) if start is None else np.asarray(start, dtype=float)
    res = nelder_mead(
        lik.negative,
        x0,
        reltol=reltol,
        max_iterations=max_iterations,
        restarts=restarts,
        initial_step=initial_step,
    )
    beta_hat = res.x
    lik.check_degenerate(beta_hat)

    cov = se = cond = None
    if compute_covariance:
        cov, se, cond = _covariance_from_hessian(lik.log_likelihood, beta_hat, hessian_step)

    beta = beta_hat.copy()
    if p1 is not None:
        beta = calibrate_intercept(beta_hat, lik.X, lik.weights, p1)

    return FitResult(
        covariates=lik.covariates,
        beta=beta,
        beta0_uncalibrated=float(beta_hat[0]),
        log_likelihood=-res.fun,
        covariance=cov,
        standard_errors=se,
        condition_number=cond,
        converged=res.converged,
        iterations=res.iterations,
        function_evaluations=res.function_evaluations,
        clamp_events=lik.clamp_events,
        total_count=lik.total_count,
        p1=p1,
    )


def fit_model(
    dataset: IndividualDataset,
    tables: list[ContingencyTable],
    covariates,
    p1: float | None = None,
    **kwargs,
) -> FitResult:
    """Fit the logistic coefficients to the table counts.

    ``covariates`` may be empty for an intercept-only model. When ``p1``
    is given the returned intercept is calibrated to it; the raw optimum
    intercept is kept alongside. ``start`` warm-starts the simplex (used by
    bootstrap replicates); the default start is the zero vector.
    """
    lik = AggregateLikelihood(dataset, tables, tuple(covariates))
    check_identifiability_total(tables, lik.n_coefficients)
    return fit_likelihood(lik, p1=p1, **kwargs)
