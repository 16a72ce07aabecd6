"""Maximize the concurrence of the remotely prepared state over the free phases θ."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.optimize import minimize_scalar

from app.config import settings
from app.errors import InvalidStateError
from app.services.measurement import PhaseMatrix, derive_seed, make_rng
from app.services.protocol import check_dimensions, check_schmidt_weights

logger = logging.getLogger(__name__)


class OptimizationResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    theta_star: PhaseMatrix
    c_star: float
    baseline_c: float
    iterations: int
    converged: bool
    restarts: int
    restart_values: Tuple[float, ...]


def _concurrence_from_arrays(lam: np.ndarray, eta: np.ndarray, theta: np.ndarray) -> float:
    # Δ[k,k′,m,m′] = θ_km + θ_k′m′ − θ_km′ − θ_k′m; the full sum counts each k>k′, m>m′ term four times
    delta = (
        theta[:, None, :, None]
        + theta[None, :, None, :]
        - theta[:, None, None, :]
        - theta[None, :, :, None]
    )
    weights = np.einsum("k,l,m,n->klmn", lam, lam, eta, eta)
    total = float(np.sum(weights * (2.0 - 2.0 * np.cos(delta)))) / 4.0
    return 2.0 * math.sqrt(max(total, 0.0))


def concurrence_F(lam: Sequence[float], eta: Sequence[float], theta: PhaseMatrix) -> float:
    """
    Closed-form concurrence of Σ e^{−iθ_mm′} √(λ_m η_m′) |mm′>:
    2 {Σ_{k>k′} Σ_{m>m′} λ_k λ_k′ η_m η_m′ |e^{i(θ_km+θ_k′m′)} − e^{i(θ_km′+θ_k′m)}|²}^{1/2}
    """
    lam, eta = check_schmidt_weights(lam, "lambda"), check_schmidt_weights(eta, "eta")
    check_dimensions(lam.size, eta.size, theta)
    return _concurrence_from_arrays(lam, eta, theta.theta)


def _gauge_fixed(theta: np.ndarray) -> np.ndarray:
    theta = np.array(theta, dtype=float)
    theta[0, :] = 0.0
    theta[:, 0] = 0.0
    return theta


def _line_search(objective, current: float, grid_points: int) -> Tuple[float, float]:
    """Coarse scan over one period, then golden-section refinement around the best grid point"""
    xs = current + 2 * np.pi * np.arange(grid_points) / grid_points
    values = np.array([objective(x) for x in xs])
    best = int(np.argmin(values))
    x_best, f_best = float(xs[best]), float(values[best])

    left, right = xs[best] - 2 * np.pi / grid_points, xs[best] + 2 * np.pi / grid_points
    if objective(left) > f_best and objective(right) > f_best:
        result = minimize_scalar(objective, bracket=(left, x_best, right), method="golden")
        if result.fun < f_best:
            x_best, f_best = float(result.x), float(result.fun)
    return x_best, f_best


def _coordinate_descent(
    lam: np.ndarray, eta: np.ndarray, start: np.ndarray, max_iters: int, tol: float
) -> Tuple[np.ndarray, float, int, bool]:
    theta = _gauge_fixed(start)
    d = theta.shape[0]
    best = _concurrence_from_arrays(lam, eta, theta)
    grid_points = settings.optimizer_grid_points

    for sweep in range(1, max_iters + 1):
        before = best
        for a in range(1, d):
            for b in range(1, d):
                def objective(x, a=a, b=b):
                    trial = theta.copy()
                    trial[a, b] = x
                    return -_concurrence_from_arrays(lam, eta, trial)

                x, f = _line_search(objective, theta[a, b], grid_points)
                if -f > best:
                    theta[a, b] = x
                    best = -f
        if best - before < tol:
            return np.mod(theta, 2 * np.pi), best, sweep, True
    return np.mod(theta, 2 * np.pi), best, max_iters, False


def optimize_phases(
    lam: Sequence[float],
    eta: Sequence[float],
    restarts: int = 8,
    seed: Optional[int] = None,
    max_iters: Optional[int] = None,
    tol: Optional[float] = None,
    include_baseline_start: bool = True,
) -> OptimizationResult:
    """
    Coordinate descent with golden-section line searches over θ, first row and
    column pinned to 0, repeated from ``restarts`` starting points.

    Restart 0 starts from θ_mm′ = 2πmm′/d unless ``include_baseline_start`` is
    False; the others start from random phases. Restarts run concurrently and
    the winner is chosen by (value, restart index). The returned θ never does
    worse than the 2πmm′/d baseline.
    """
    lam, eta = check_schmidt_weights(lam, "lambda"), check_schmidt_weights(eta, "eta")
    if lam.size != eta.size:
        raise InvalidStateError(f"dimension mismatch: {lam.size} vs {eta.size}")
    if restarts < 1:
        raise InvalidStateError(f"restarts must be >= 1, got {restarts}")
    d = lam.size
    seed = settings.default_seed if seed is None else int(seed)
    max_iters = settings.optimizer_max_iters if max_iters is None else max_iters
    tol = settings.optimizer_tol if tol is None else tol

    baseline = PhaseMatrix.fourier(d)
    baseline_c = _concurrence_from_arrays(lam, eta, baseline.theta)

    def run(index: int):
        if index == 0 and include_baseline_start:
            start = baseline.theta
        else:
            start = make_rng(derive_seed(seed, index)).uniform(0.0, 2 * np.pi, size=(d, d))
        return _coordinate_descent(lam, eta, start, max_iters, tol)

    with ThreadPoolExecutor(max_workers=settings.max_workers) as executor:
        runs = list(executor.map(run, range(restarts)))

    winner = min(range(restarts), key=lambda i: (-runs[i][1], i))
    theta_star, c_star, iterations, converged = runs[winner]
    if c_star < baseline_c:
        logger.info(f"Restarts peaked at {c_star:.12f}, below the baseline {baseline_c:.12f}; keeping the baseline")
        theta_star, c_star = baseline.theta, baseline_c

    logger.info(f"Phase optimization d={d}: best {c_star:.12f} (baseline {baseline_c:.12f}) from restart {winner}")
    return OptimizationResult(
        theta_star=PhaseMatrix(theta=theta_star),
        c_star=c_star,
        baseline_c=baseline_c,
        iterations=iterations,
        converged=converged,
        restarts=restarts,
        restart_values=tuple(r[1] for r in runs),
    )


def phases_for_target_concurrence(lam: Sequence[float], eta: Sequence[float], target: float) -> PhaseMatrix:
    """Qubit phases whose prepared state has the target concurrence: θ11 = 2 arcsin(target / C12C34)"""
    lam, eta = check_schmidt_weights(lam, "lambda"), check_schmidt_weights(eta, "eta")
    if lam.size != 2 or eta.size != 2:
        raise InvalidStateError("target phases are defined for qubit links only")
    ceiling = 4.0 * math.sqrt(lam[0] * lam[1] * eta[0] * eta[1])
    tol = settings.tolerance
    if target < -tol or target > ceiling + tol:
        raise InvalidStateError(f"target {target} outside the reachable range [0, {ceiling:.12g}]")
    theta = np.zeros((2, 2))
    if ceiling > 0.0:
        theta[1, 1] = 2.0 * math.asin(min(max(target, 0.0) / ceiling, 1.0))
    return PhaseMatrix(theta=theta)
