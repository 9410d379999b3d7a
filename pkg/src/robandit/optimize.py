"""Derivative-free maximizer for the actor objective.

The actor objective is not concave in theta, so each update runs a coarse
grid search over a box, seeds Nelder-Mead from the best few points (plus
the previous round's solution as a warm start), and keeps the overall
best.  Everything is deterministic: no randomness, and value ties are
broken by the lexicographically smallest point so enumeration order never
matters.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .errors import InvalidArgumentError, OptimizationFailedError

N_SEEDS = 3


@dataclass(frozen=True)
class OptimizerConfig:
    grid_radius: float = 5.0
    grid_points_per_axis: int = 3
    nm_max_iters: int = 600
    nm_xatol: float = 1e-4
    nm_fatol: float = 1e-8
    warm_start: np.ndarray | None = None

    def __post_init__(self):
        if self.grid_radius <= 0 or self.grid_points_per_axis < 1:
            raise InvalidArgumentError("grid radius and points per axis must be positive")
        if self.nm_xatol <= 0 or self.nm_fatol <= 0 or self.nm_max_iters < 1:
            raise InvalidArgumentError("Nelder-Mead tolerances and budget must be positive")

    def with_warm_start(self, point: np.ndarray) -> "OptimizerConfig":
        return replace(self, warm_start=np.asarray(point, dtype=float))


def _safe_value(objective, x: np.ndarray) -> float:
    v = float(objective(x))
    return v if np.isfinite(v) else -np.inf


def maximize(objective, dim: int, config: OptimizerConfig) -> tuple[np.ndarray, float]:
    """Maximize a function of a dim-vector over R^dim.

    Evaluates every grid point of [-radius, radius]^dim (plus the warm
    start when configured), runs Nelder-Mead from the top N_SEEDS seeds,
    and returns (best point, best value) over everything evaluated.
    Points where the objective is non-finite are discarded; if nothing is
    finite the search fails.
    """
    axis = np.linspace(-config.grid_radius, config.grid_radius, config.grid_points_per_axis)
    seeds = [np.array(p, dtype=float) for p in itertools.product(axis, repeat=dim)]
    if config.warm_start is not None:
        warm = np.asarray(config.warm_start, dtype=float)
        if warm.shape != (dim,):
            raise InvalidArgumentError(f"warm start has shape {warm.shape}, expected ({dim},)")
        seeds.append(warm)

    evaluated = [(x, _safe_value(objective, x)) for x in seeds]
    finite = [(x, v) for x, v in evaluated if np.isfinite(v)]
    if not finite:
        raise OptimizationFailedError("objective was non-finite at every seed point")
    finite.sort(key=lambda xv: (-xv[1], tuple(xv[0])))
    candidates = list(finite[:1])

    def neg(x: np.ndarray) -> float:
        v = float(objective(x))
        return -v if np.isfinite(v) else np.inf

    for x0, _ in finite[:N_SEEDS]:
        res = minimize(
            neg,
            x0,
            method="Nelder-Mead",
            options={
                "maxiter": config.nm_max_iters,
                "maxfev": 4 * config.nm_max_iters,
                "xatol": config.nm_xatol,
                "fatol": config.nm_fatol,
                "adaptive": False,
            },
        )
        if np.isfinite(res.fun):
            candidates.append((np.asarray(res.x, dtype=float), -float(res.fun)))

    best_x, best_v = min(candidates, key=lambda xv: (-xv[1], tuple(xv[0])))
    return best_x, best_v
