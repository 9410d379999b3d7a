"""Critic-side estimators.

Three fitting routines live here: the norm-constrained importance-weighted
least squares used by the proposed agent, the running ridge regression
used by the baseline actor-critic, and the per-arm weighted LSE on stacked
contexts used by the epsilon-greedy comparator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, InvalidDataError, InvalidStateError
from .policy import InteractionLog, chosen_arm_design

# Stabilizing ridge for rank-deficient (early-time) normal equations, and
# the condition number beyond which it kicks in.
STABILIZER = 1e-8
COND_LIMIT = 1e12

# Baseline reward estimates are clamped to +-2 before entering the actor
# objective.
TRUNCATION_BOUND = 2.0


@dataclass(frozen=True)
class WlsProblem:
    """Weighted least-squares data: one row per logged round.

    features[tau] are the advantage features of the chosen arm, weights
    are the importance ratios, targets the observed rewards.
    """

    features: np.ndarray
    targets: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.targets, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],) or w.shape != (X.shape[0],):
            raise InvalidDataError(
                f"inconsistent WLS shapes: X {X.shape}, y {y.shape}, w {w.shape}"
            )
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
            raise InvalidDataError("WLS problem contains non-finite values")
        if np.any(w <= 0):
            raise InvalidDataError("WLS weights must be strictly positive")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "weights", w)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class RidgeState:
    """Running normal equations of the baseline ridge critic: gram matrix
    B (initialized ridge_scale * I) and moment vector y."""

    gram: np.ndarray
    moment: np.ndarray
    ridge_scale: float

    @staticmethod
    def initial(dim: int, ridge_scale: float = 1.0) -> "RidgeState":
        if ridge_scale <= 0:
            raise InvalidDataError("ridge scale must be > 0")
        return RidgeState(ridge_scale * np.eye(dim), np.zeros(dim), ridge_scale)


def build_wls_problem(log: InteractionLog, theta: np.ndarray) -> WlsProblem:
    """Assemble the critic's WLS problem from the log at the given theta.

    Row tau uses the advantage features of the chosen arm, weight
    pi_theta(b_tau, a_tau) / behavior_propensity_tau, target r_tau.
    """
    if len(log) == 0:
        raise InvalidStateError("cannot build a WLS problem from an empty log")
    x, w, r = chosen_arm_design(log, np.asarray(theta, dtype=float))
    return WlsProblem(features=x, targets=r, weights=w)


def _solve_gram(gram: np.ndarray, moment: np.ndarray) -> np.ndarray:
    if np.linalg.cond(gram) > COND_LIMIT:
        gram = gram + STABILIZER * np.eye(gram.shape[0])
    return np.linalg.solve(gram, moment)


def constrained_wls(problem: WlsProblem, C: float) -> np.ndarray:
    """argmin over {||mu|| <= C} of sum_tau w_tau (r_tau - x_tau . mu)^2.

    Solves the unconstrained weighted normal equations first (with a
    stabilizing ridge when the Gram matrix is ill-conditioned); when the
    unconstrained solution already satisfies the norm cap it is returned
    unchanged, otherwise the boundary solution is found through the scalar
    dual: bisection on rho >= 0 for ||(G + rho I)^-1 h|| = C.
    """
    if problem.n_rows == 0:
        raise InvalidStateError("constrained_wls needs at least one row")
    if C <= 0:
        raise InvalidDataError("norm cap C must be > 0")
    X, y, w = problem.features, problem.targets, problem.weights
    G = (X * w[:, None]).T @ X
    h = (X * w[:, None]).T @ y

    mu = _solve_gram(G, h)
    if np.linalg.norm(mu) <= C:
        return mu

    eye = np.eye(G.shape[0])

    def boundary_norm(rho: float) -> float:
        return float(np.linalg.norm(np.linalg.solve(G + rho * eye, h)))

    lo = 0.0
    hi = 1.0
    while boundary_norm(hi) > C:
        hi *= 2.0
        if hi > 1e30:
            raise InvalidDataError("constraint projection failed to bracket")
    # Invariant: norm(hi side) <= C < norm(lo side); returning the hi side
    # keeps the solution inside the ball.
    while (hi - lo) > 1e-10 * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if boundary_norm(mid) > C:
            lo = mid
        else:
            hi = mid
    return np.linalg.solve(G + hi * eye, h)


def ridge_update(
    state: RidgeState, context_row: np.ndarray, reward: float
) -> tuple[RidgeState, np.ndarray]:
    """One rank-1 update of the baseline ridge critic; returns the new
    state and the refreshed estimate B^-1 y."""
    b = np.asarray(context_row, dtype=float)
    if not (np.all(np.isfinite(b)) and np.isfinite(reward)):
        raise InvalidDataError("ridge update received non-finite input")
    gram = state.gram + np.outer(b, b)
    moment = state.moment + b * reward
    new_state = RidgeState(gram, moment, state.ridge_scale)
    return new_state, np.linalg.solve(gram, moment)


def truncate_reward_estimate(raw):
    """Clamp critic reward estimates to [-2, 2] (baseline algorithm only)."""
    return np.clip(raw, -TRUNCATION_BOUND, TRUNCATION_BOUND)


def stack_context_rows(contexts: np.ndarray) -> np.ndarray:
    """Flatten each record's N x d context matrix into one N*d row."""
    t = contexts.shape[0]
    return contexts.reshape(t, -1)


def epsilon_greedy_wlse(log: InteractionLog, arm: int, n_arms: int) -> np.ndarray:
    """Weighted LSE of rewards on stacked contexts for one arm.

    Uses only the records where `arm` was pulled, weighted by the inverse
    of the logged propensity; returns the stacked coefficient vector of
    dimension n_arms * d.  Needs at least d such records.
    """
    if len(log) == 0:
        raise InvalidStateError("epsilon_greedy_wlse needs a nonempty log")
    if log.n_arms != n_arms:
        raise InvalidDataError(f"log has {log.n_arms} arms, expected {n_arms}")
    mask = log.arms() == arm
    if int(mask.sum()) < log.dim:
        raise InsufficientDataError(
            f"arm {arm} has {int(mask.sum())} records, need at least {log.dim}"
        )
    Z = stack_context_rows(log.contexts())[mask]
    r = log.rewards()[mask]
    w = 1.0 / log.propensities()[mask]
    G = (Z * w[:, None]).T @ Z
    h = (Z * w[:, None]).T @ r
    return _solve_gram(G, h)
