"""Derivative-free minimization and finite-difference curvature.

The cell-averaged likelihood is smooth but its gradient is awkward to
maintain by hand, so fitting uses a Nelder-Mead simplex search with a
relative function-spread stopping rule and a small number of restarts from
the incumbent. All tie-breaking is by stable sort, so given the same
objective and start the trajectory is bit-for-bit reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REFLECTION = 1.0
EXPANSION = 2.0
CONTRACTION = 0.5
SHRINK = 0.5

DEFAULT_RELTOL = 1e-10
DEFAULT_MAX_ITERATIONS = 2000
DEFAULT_RESTARTS = 2
DEFAULT_INITIAL_STEP = 0.5


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    converged: bool
    iterations: int
    function_evaluations: int
    restarts_used: int


def _initial_simplex(x0: np.ndarray, step: float) -> np.ndarray:
    d = x0.size
    simplex = np.tile(x0, (d + 1, 1))
    for j in range(d):
        simplex[j + 1, j] += step
    return simplex


def _spread_converged(fvals: np.ndarray, reltol: float) -> bool:
    fb, fw = float(fvals[0]), float(fvals[-1])
    return (fw - fb) <= reltol * (abs(fb) + reltol)


def nelder_mead(
    f,
    x0,
    reltol: float = DEFAULT_RELTOL,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    restarts: int = DEFAULT_RESTARTS,
    initial_step: float = DEFAULT_INITIAL_STEP,
) -> MinimizeResult:
    """Minimize ``f`` starting from ``x0``.

    Runs one simplex search plus ``restarts`` further searches, each
    re-initialized around the best point found so far with the original
    step. A run stops when the simplex function spread is small relative to
    the best value, or after ``max_iterations`` iterations. The reported
    ``converged`` flag describes the final run.
    """
    x0 = np.asarray(x0, dtype=float).copy()
    evals = 0
    total_iters = 0

    def call(x):
        nonlocal evals
        evals += 1
        return float(f(x))

    best_x = x0
    best_f = call(best_x)
    converged = False

    for run in range(restarts + 1):
        simplex = _initial_simplex(best_x, initial_step)
        fvals = np.array([call(v) for v in simplex])
        converged = False
        for _ in range(max_iterations):
            order = np.argsort(fvals, kind="stable")
            simplex, fvals = simplex[order], fvals[order]
            if _spread_converged(fvals, reltol):
                converged = True
                break
            total_iters += 1
            centroid = simplex[:-1].mean(axis=0)
            worst = simplex[-1]
            xr = centroid + REFLECTION * (centroid - worst)
            fr = call(xr)
            if fr < fvals[0]:
                xe = centroid + EXPANSION * (xr - centroid)
                fe = call(xe)
                if fe < fr:
                    simplex[-1], fvals[-1] = xe, fe
                else:
                    simplex[-1], fvals[-1] = xr, fr
            elif fr < fvals[-2]:
                simplex[-1], fvals[-1] = xr, fr
            else:
                if fr < fvals[-1]:
                    xc = centroid + CONTRACTION * (xr - centroid)
                else:
                    xc = centroid + CONTRACTION * (worst - centroid)
                fc = call(xc)
                if fc < min(fr, fvals[-1]):
                    simplex[-1], fvals[-1] = xc, fc
                else:
                    for i in range(1, simplex.shape[0]):
                        simplex[i] = simplex[0] + SHRINK * (simplex[i] - simplex[0])
                        fvals[i] = call(simplex[i])
        order = np.argsort(fvals, kind="stable")
        if fvals[order[0]] < best_f:
            best_x = simplex[order[0]].copy()
            best_f = float(fvals[order[0]])

    return MinimizeResult(
        x=best_x,
        fun=best_f,
        converged=converged,
        iterations=total_iters,
        function_evaluations=evals,
        restarts_used=restarts,
    )


def finite_difference_hessian(f, x, step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of ``f`` at ``x``.

    Per-coordinate steps scale with the magnitude of the point,
    h_j = step * max(1, |x_j|), and the result is symmetrized to remove
    the rounding asymmetry of cross terms.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    h = step * np.maximum(1.0, np.abs(x))
    H = np.empty((d, d))
    f0 = float(f(x))

    def at(*moves):
        y = x.copy()
        for j, mult in moves:
            y[j] += mult * h[j]
        return float(f(y))

    for j in range(d):
        H[j, j] = (at((j, 1)) - 2.0 * f0 + at((j, -1))) / h[j] ** 2
        for k in range(j + 1, d):
            quad = at((j, 1), (k, 1)) - at((j, 1), (k, -1)) - at((j, -1), (k, 1)) + at((j, -1), (k, -1))
            H[j, k] = H[k, j] = quad / (4.0 * h[j] * h[k])
    return 0.5 * (H + H.T)


def bisect(g, lo: float, hi: float, tol: float = 1e-10, max_expand: int = 60):
    """Root of a monotone-increasing ``g`` on [lo, hi], expanding the
    bracket geometrically when the root lies outside. Returns the midpoint
    once the bracket is narrower than ``tol`` or than the floating-point
    spacing at the root's magnitude; None if no bracket exists.
    """
    glo, ghi = g(lo), g(hi)
    expand = 0
    width = hi - lo
    while glo > 0 and expand < max_expand:
        hi, ghi = lo, glo
        lo -= width
        width *= 2.0
        glo = g(lo)
        expand += 1
    while ghi < 0 and expand < max_expand:
        lo, glo = hi, ghi
        hi += width
        width *= 2.0
        ghi = g(hi)
        expand += 1
    if glo > 0 or ghi < 0:
        return None
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        # A wide-magnitude bracket can be narrower than one floating-point
        # step, where the midpoint lands on an endpoint and an absolute
        # tolerance would never be reached.
        if not lo < mid < hi:
            break
        gm = g(mid)
        if gm == 0.0:
            return mid
        if gm < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
