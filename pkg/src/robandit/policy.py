"""Softmax actor, advantage-form critic, and their empirical objectives.

The actor is a softmax over per-arm linear scores ``b_i . theta``.  The
critic predicts the advantage of an arm as ``(b_i - b_bar) . mu`` where
``b_bar`` is the policy-weighted mean of the arm features.  This pairing
satisfies the compatibility identity

    grad_theta pi(b, i) / pi(b, i) == grad_mu m(b, i)

which is what makes the actor update correct even when the critic's
linear model is wrong for the true rewards.

Parameters ``theta`` and ``mu`` are plain 1-D float arrays throughout.
Arm indices are 0-based in this API; user-facing output (CLI tables,
serialized logs) is 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, InvalidDataError, InvalidStateError

# Probabilities are floored here before any division so importance ratios
# never hit 0/0, even for parameter values far outside the sane range.
PROB_FLOOR = 1e-300

NORM_TOL = 1e-9


def _as_param(v, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise InvalidArgumentError(f"parameter vector must be 1-D, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise InvalidArgumentError(f"parameter has dimension {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise InvalidDataError("parameter vector contains non-finite entries")
    return v


@dataclass(frozen=True)
class ContextSet:
    """Per-round feature matrix: row i holds the feature vector of arm i.

    Invariants: at least two arms, and every row has L2 norm <= 1.
    """

    arms: np.ndarray

    def __post_init__(self):
        arms = np.asarray(self.arms, dtype=float)
        if arms.ndim != 2:
            raise InvalidArgumentError(f"arms must be an N x d matrix, got shape {arms.shape}")
        if arms.shape[0] < 2 or arms.shape[1] < 1:
            raise InvalidArgumentError(f"need N >= 2 arms and d >= 1 features, got {arms.shape}")
        if not np.all(np.isfinite(arms)):
            raise InvalidDataError("context matrix contains non-finite entries")
        norms = np.linalg.norm(arms, axis=1)
        if np.any(norms > 1.0 + NORM_TOL):
            raise InvalidDataError(f"arm feature rows must have L2 norm <= 1 (max {norms.max():.6g})")
        object.__setattr__(self, "arms", arms)

    @property
    def n_arms(self) -> int:
        return self.arms.shape[0]

    @property
    def dim(self) -> int:
        return self.arms.shape[1]


@dataclass(frozen=True)
class InteractionRecord:
    """One logged round: the revealed contexts, the arm pulled, the observed
    reward, and the probability with which that arm was pulled at the time.

    Rewards outside [-1, 1] are rejected rather than clamped: bounded
    rewards are the caller's contract for external data (the simulator
    clamps its own noise before building records).
    """

    context: ContextSet
    arm: int
    reward: float
    behavior_propensity: float

    def __post_init__(self):
        if not 0 <= self.arm < self.context.n_arms:
            raise InvalidArgumentError(
                f"arm index {self.arm} out of range for {self.context.n_arms} arms"
            )
        if not np.isfinite(self.reward) or abs(self.reward) > 1.0:
            raise InvalidDataError(f"reward {self.reward} outside [-1, 1]")
        if not np.isfinite(self.behavior_propensity) or not 0.0 < self.behavior_propensity < 1.0:
            raise InvalidDataError(f"behavior propensity {self.behavior_propensity} not in (0, 1)")


@dataclass
class InteractionLog:
    """Time-ordered, append-only list of interaction records.

    All records must share the same (N, d) shape; the log keeps stacked
    array views (contexts, arms, rewards, propensities) in sync with the
    record list so the objective functions can work vectorized.
    """

    records: list[InteractionRecord] = field(default_factory=list)

    def __post_init__(self):
        records = list(self.records)
        self.records = []
        self._contexts: list[np.ndarray] = []
        self._arms: list[int] = []
        self._rewards: list[float] = []
        self._propensities: list[float] = []
        for r in records:
            self.append(r)

    def append(self, record: InteractionRecord) -> None:
        if self.records:
            first = self.records[0].context
            if record.context.arms.shape != first.arms.shape:
                raise InvalidArgumentError(
                    "all records in a log must share the same context shape "
                    f"({record.context.arms.shape} vs {first.arms.shape})"
                )
        self.records.append(record)
        self._contexts.append(record.context.arms)
        self._arms.append(record.arm)
        self._rewards.append(record.reward)
        self._propensities.append(record.behavior_propensity)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def n_arms(self) -> int:
        self._require_nonempty()
        return self.records[0].context.n_arms

    @property
    def dim(self) -> int:
        self._require_nonempty()
        return self.records[0].context.dim

    def contexts(self) -> np.ndarray:
        """Stacked (t, N, d) context array."""
        self._require_nonempty()
        return np.asarray(self._contexts)

    def arms(self) -> np.ndarray:
        self._require_nonempty()
        return np.asarray(self._arms, dtype=int)

    def rewards(self) -> np.ndarray:
        self._require_nonempty()
        return np.asarray(self._rewards, dtype=float)

    def propensities(self) -> np.ndarray:
        self._require_nonempty()
        return np.asarray(self._propensities, dtype=float)

    def _require_nonempty(self) -> None:
        if not self.records:
            raise InvalidStateError("interaction log is empty")


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction; output floored at PROB_FLOOR."""
    scores = np.atleast_2d(scores)
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=-1, keepdims=True)
    return np.maximum(probs, PROB_FLOOR)


def softmax_policy(context: ContextSet, theta: np.ndarray) -> np.ndarray:
    """Action probabilities pi_theta(b, .) for one context set.

    Computed with max-shift for overflow safety; entries are positive and
    sum to 1 (up to the tiny floor applied to protect later divisions).
    """
    theta = _as_param(theta, context.dim)
    return softmax_rows(context.arms @ theta)[0]


def advantage_features(context: ContextSet, theta: np.ndarray, arm: int) -> np.ndarray:
    """Centered features b_arm - sum_j pi_theta(b, j) b_j.

    The critic's prediction for an arm is the inner product of this vector
    with mu.
    """
    _check_arm(context, arm)
    probs = softmax_policy(context, theta)
    return context.arms[arm] - probs @ context.arms


def policy_gradient(context: ContextSet, theta: np.ndarray, arm: int) -> np.ndarray:
    """Gradient of pi_theta(b, arm) with respect to theta.

    Equals pi_theta(b, arm) times the advantage features of the arm, which
    is the compatibility identity this module is built around.
    """
    _check_arm(context, arm)
    probs = softmax_policy(context, theta)
    centered = context.arms[arm] - probs @ context.arms
    return probs[arm] * centered


def critic_predict(context: ContextSet, theta: np.ndarray, mu: np.ndarray, arm: int) -> float:
    """Advantage-form critic value for one arm."""
    mu = _as_param(mu, context.dim)
    return float(advantage_features(context, theta, arm) @ mu)


def policy_value_term(contexts: np.ndarray, scores: np.ndarray, theta: np.ndarray) -> float:
    """Mean over records of sum_i scores[t, i] * pi_theta(b_t, i).

    Shared kernel behind the actor objectives: `scores` is a precomputed
    (t, N) matrix of per-arm values (critic predictions, truncated or not).
    """
    probs = softmax_rows(contexts @ theta)
    return float(np.mean(np.sum(scores * probs, axis=1)))


def empirical_J(log: InteractionLog, mu: np.ndarray, theta: np.ndarray, lam: float) -> float:
    """Penalized empirical actor objective.

    (1/t) sum_tau sum_i (b_{tau,i} . mu) pi_theta(b_tau, i)  -  lam theta.theta

    Every arm of every record contributes, not only the chosen arms.
    """
    if len(log) == 0:
        raise InvalidStateError("empirical_J needs a nonempty log")
    contexts = log.contexts()
    mu = _as_param(mu, log.dim)
    theta = _as_param(theta, log.dim)
    return policy_value_term(contexts, contexts @ mu, theta) - float(lam) * float(theta @ theta)


def empirical_U(log: InteractionLog, mu: np.ndarray, theta: np.ndarray) -> float:
    """Importance-weighted residual mean square of the critic.

    (1/t) sum_tau {r_tau - m(b_{tau,a_tau})}^2 pi_theta(b_tau,a_tau) / propensity_tau

    Only the chosen arm of each record contributes; the logged propensity
    in the denominator corrects for the policy drift across rounds.
    """
    if len(log) == 0:
        raise InvalidStateError("empirical_U needs a nonempty log")
    mu = _as_param(mu, log.dim)
    theta = _as_param(theta, log.dim)
    x, w, r = chosen_arm_design(log, theta)
    resid = r - x @ mu
    return float(np.mean(resid * resid * w))


def chosen_arm_design(log: InteractionLog, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (advantage features, importance weights, rewards) of the
    chosen arm of every record, all evaluated at the given theta."""
    contexts = log.contexts()
    arm_idx = log.arms()
    probs = softmax_rows(contexts @ theta)
    b_bar = np.einsum("tn,tnd->td", probs, contexts)
    rows = np.arange(len(log))
    x = contexts[rows, arm_idx] - b_bar
    w = probs[rows, arm_idx] / log.propensities()
    return x, w, log.rewards()


def _check_arm(context: ContextSet, arm: int) -> None:
    if not 0 <= arm < context.n_arms:
        raise InvalidArgumentError(f"arm index {arm} out of range for {context.n_arms} arms")
