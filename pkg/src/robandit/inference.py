"""Plug-in sandwich covariance and Z-tests for the actor-critic estimates.

The joint estimate (mu_hat, theta_hat) solves a pair of estimating
equations (the critic's weighted-least-squares score and the actor's
penalized-value gradient).  Its asymptotic variance is the sandwich
Psi = Lambda^-1 V Lambda^-T, where Lambda stacks the derivatives of the
mean scores and V is the average outer product of the per-round scores.
Scores are adaptive (each round's importance weight uses the logged
propensity), which is exactly why the plain i.i.d. variance would be
wrong here.

Everything is a plug-in: expectations are replaced by empirical means
over the log and evaluated at the estimates.  V uses raw, non-centered
outer products (the scores are mean zero at the truth; centering would
change the estimator).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import erf, sqrt

import numpy as np

from .errors import (
    InferenceUnavailableError,
    InsufficientDataError,
    InvalidArgumentError,
    InvalidStateError,
)
from .policy import InteractionLog, InteractionRecord, softmax_rows
from .estimation import epsilon_greedy_wlse, stack_context_rows

FD_STEP = 1e-5
COND_LIMIT = 1e12


@dataclass(frozen=True)
class ScorePair:
    """Per-round estimating-function values: the critic score u_mu and the
    actor score j_theta."""

    u_mu: np.ndarray
    j_theta: np.ndarray

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u_mu, self.j_theta])


@dataclass(frozen=True)
class SandwichCovariance:
    """Bread, meat, and the assembled sandwich, plus the sample size the
    per-coordinate variances are divided by."""

    lambda_hat: np.ndarray
    v_hat: np.ndarray
    psi_hat: np.ndarray
    t: int

    @property
    def dim(self) -> int:
        return self.psi_hat.shape[0] // 2

    def theta_variance(self, j: int) -> float:
        """Asymptotic variance of theta_hat[j] (already divided by t)."""
        d = self.dim
        return float(self.psi_hat[d + j, d + j]) / self.t


@dataclass(frozen=True)
class CoordinateTest:
    name: str
    estimate: float
    std_error: float
    z_stat: float
    p_value: float
    reject: bool
    defined: bool = True


@dataclass(frozen=True)
class TestReport:
    coordinates: tuple[CoordinateTest, ...]
    alpha: float
    t: int

    def to_dict(self) -> dict:
        def clean(v):
            return None if not np.isfinite(v) else float(v)

        return {
            "alpha": self.alpha,
            "t": self.t,
            "coordinates": [
                {
                    "name": c.name,
                    "estimate": clean(c.estimate),
                    "std_error": clean(c.std_error),
                    "z_stat": clean(c.z_stat),
                    "p_value": clean(c.p_value),
                    "reject": c.reject,
                    "defined": c.defined,
                }
                for c in self.coordinates
            ],
        }

    def format_table(self) -> str:
        header = f"{'parameter':<16}{'estimate':>12}{'std_err':>12}{'z':>10}{'p_value':>12}  reject"
        lines = [header, "-" * len(header)]
        for c in self.coordinates:
            if c.defined:
                lines.append(
                    f"{c.name:<16}{c.estimate:>12.4f}{c.std_error:>12.4f}"
                    f"{c.z_stat:>10.3f}{c.p_value:>12.4g}  {'yes' if c.reject else 'no'}"
                )
            else:
                lines.append(f"{c.name:<16}{c.estimate:>12.4f}{'--':>12}{'--':>10}{'--':>12}  undefined")
        lines.append(f"(t = {self.t}, alpha = {self.alpha})")
        return "\n".join(lines)


def normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + erf(z / sqrt(2.0)))


def _design(log: InteractionLog, mu: np.ndarray, theta: np.ndarray):
    """Shared per-record quantities at (mu, theta)."""
    contexts = log.contexts()
    arms = log.arms()
    rows = np.arange(len(log))
    probs = softmax_rows(contexts @ theta)
    b_bar = np.einsum("tn,tnd->td", probs, contexts)
    centered = contexts - b_bar[:, None, :]
    x = centered[rows, arms]
    w = probs[rows, arms] / log.propensities()
    resid = log.rewards() - x @ mu
    return contexts, probs, centered, x, w, resid


def score_matrices(
    log: InteractionLog, mu: np.ndarray, theta: np.ndarray, lam: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-record scores, one row per round: (u_mu rows, j_theta rows)."""
    contexts, probs, centered, x, w, resid = _design(log, mu, theta)
    u_rows = -2.0 * (resid * w)[:, None] * x
    scores = contexts @ mu
    j_rows = np.einsum("tn,tnd->td", scores * probs, centered) - 2.0 * lam * theta
    return u_rows, j_rows


def score_pair(
    record: InteractionRecord, mu: np.ndarray, theta: np.ndarray, lam: float
) -> ScorePair:
    """Scores of a single record at (mu, theta).

    u_mu is the gradient in mu of the record's importance-weighted squared
    residual (only the chosen arm contributes); j_theta is the gradient in
    theta of the record's contribution to the penalized actor objective
    (every arm contributes).
    """
    log = InteractionLog([record])
    u_rows, j_rows = score_matrices(log, np.asarray(mu, float), np.asarray(theta, float), lam)
    return ScorePair(u_mu=u_rows[0], j_theta=j_rows[0])


def v_hat(log: InteractionLog, mu: np.ndarray, theta: np.ndarray, lam: float) -> np.ndarray:
    """Average outer product of the stacked per-round scores (the meat)."""
    if len(log) == 0:
        raise InvalidStateError("v_hat needs a nonempty log")
    u_rows, j_rows = score_matrices(log, np.asarray(mu, float), np.asarray(theta, float), lam)
    s = np.hstack([u_rows, j_rows])
    return s.T @ s / len(log)


def _mean_u(log: InteractionLog, mu: np.ndarray, theta: np.ndarray) -> np.ndarray:
    _, _, _, x, w, resid = _design(log, mu, theta)
    return (-2.0 * (resid * w)[:, None] * x).mean(axis=0)


def _mean_j(log: InteractionLog, mu: np.ndarray, theta: np.ndarray, lam: float) -> np.ndarray:
    contexts, probs, centered, _, _, _ = _design(log, mu, theta)
    scores = contexts @ mu
    return np.einsum("tn,tnd->td", scores * probs, centered).mean(axis=0) - 2.0 * lam * theta


def lambda_hat(
    log: InteractionLog,
    mu: np.ndarray,
    theta: np.ndarray,
    lam: float,
    fd_step: float = FD_STEP,
) -> np.ndarray:
    """Empirical bread matrix: derivatives of the mean scores in (mu, theta).

    The mu-derivatives (U_mumu, J_thetamu) have simple closed forms and are
    computed analytically; the theta-derivatives (U_mutheta, J_thetatheta)
    use central finite differences of the mean scores.
    """
    if len(log) == 0:
        raise InvalidStateError("lambda_hat needs a nonempty log")
    if fd_step <= 0:
        raise InvalidArgumentError("finite-difference step must be > 0")
    mu = np.asarray(mu, dtype=float)
    theta = np.asarray(theta, dtype=float)
    d = log.dim
    t = len(log)
    contexts, probs, centered, x, w, _ = _design(log, mu, theta)

    u_mm = 2.0 * (x * w[:, None]).T @ x / t
    j_tm = np.einsum("tn,tnp,tnq->pq", probs, centered, contexts) / t

    u_mt = np.empty((d, d))
    j_tt = np.empty((d, d))
    for k in range(d):
        step = np.zeros(d)
        step[k] = fd_step
        u_mt[:, k] = (_mean_u(log, mu, theta + step) - _mean_u(log, mu, theta - step)) / (2 * fd_step)
        j_tt[:, k] = (_mean_j(log, mu, theta + step, lam) - _mean_j(log, mu, theta - step, lam)) / (
            2 * fd_step
        )

    top = np.hstack([u_mm, u_mt])
    bottom = np.hstack([j_tm, j_tt])
    return np.vstack([top, bottom])


def j_theta_theta_analytic(
    log: InteractionLog, mu: np.ndarray, theta: np.ndarray, lam: float
) -> np.ndarray:
    """Closed form of the actor-block Hessian, used to cross-check the
    finite-difference block in lambda_hat."""
    contexts, probs, centered, _, _, _ = _design(log, np.asarray(mu, float), np.asarray(theta, float))
    t = len(log)
    scores = contexts @ mu
    term1 = np.einsum("tn,tnp,tnq->pq", scores * probs, centered, centered) / t
    per_record_gram = np.einsum("tn,tnp,tnq->tpq", probs, centered, centered)
    coef = np.sum(scores * probs, axis=1)
    term2 = np.einsum("t,tpq->pq", coef, per_record_gram) / t
    return term1 - term2 - 2.0 * lam * np.eye(log.dim)


def phi_squared_hat(log: InteractionLog, theta: np.ndarray) -> float:
    """Smallest eigenvalue of the empirical policy-weighted advantage Gram
    (all arms).  Plays the role of the exploration floor phi^2 in the
    compactness bounds."""
    contexts, probs, centered, _, _, _ = _design(log, np.zeros(log.dim), np.asarray(theta, float))
    gram = np.einsum("tn,tnp,tnq->pq", probs, centered, centered) / len(log)
    return float(np.linalg.eigvalsh(gram)[0])


def sandwich(
    log: InteractionLog,
    mu: np.ndarray,
    theta: np.ndarray,
    lam: float,
    fd_step: float = FD_STEP,
) -> SandwichCovariance:
    """Assemble Psi_hat = Lambda_hat^-1 V_hat Lambda_hat^-T.

    A near-singular bread matrix is a statistical signal (not enough data
    to identify all 2d parameters), so it raises rather than falling back
    to a pseudo-inverse.
    """
    lam_hat = lambda_hat(log, mu, theta, lam, fd_step)
    v = v_hat(log, mu, theta, lam)
    cond = float(np.linalg.cond(lam_hat))
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        raise InferenceUnavailableError(
            f"bread matrix condition number {cond:.3g} too large for inversion", cond
        )
    half = np.linalg.solve(lam_hat, v)
    psi = np.linalg.solve(lam_hat, half.T).T
    return SandwichCovariance(lambda_hat=lam_hat, v_hat=v, psi_hat=psi, t=len(log))


def _coordinate_test(name: str, estimate: float, variance: float, alpha: float) -> CoordinateTest:
    if not np.isfinite(variance) or variance <= 0.0:
        return CoordinateTest(name, estimate, float("nan"), float("nan"), float("nan"), False, False)
    se = sqrt(variance)
    z = estimate / se
    p = 2.0 * (1.0 - normal_cdf(abs(z)))
    return CoordinateTest(name, estimate, se, z, p, p < alpha, True)


def z_test(theta: np.ndarray, cov: SandwichCovariance, alpha: float) -> TestReport:
    """Two-sided Z-test of H0: theta_j = 0 for every actor coordinate.

    Z_j = theta_hat_j / sqrt(Psi_hat[d+j, d+j] / t); rejection when the
    normal p-value falls below alpha.  Coordinates with nonpositive
    variance estimates are reported as undefined rather than failing the
    whole report.
    """
    theta = np.asarray(theta, dtype=float)
    if cov.t <= 0:
        raise InvalidStateError("covariance carries no sample size")
    if theta.shape[0] != cov.dim:
        raise InvalidArgumentError("theta dimension does not match the covariance")
    coords = tuple(
        _coordinate_test(f"theta_{j + 1}", float(theta[j]), cov.theta_variance(j), alpha)
        for j in range(cov.dim)
    )
    return TestReport(coordinates=coords, alpha=alpha, t=cov.t)


def contrast_test(
    theta: np.ndarray,
    cov: SandwichCovariance,
    pairs: list[tuple[int, int]],
    alpha: float,
) -> TestReport:
    """Z-tests of H0: theta_j - theta_k = 0 for the given 0-based pairs."""
    theta = np.asarray(theta, dtype=float)
    d = cov.dim
    coords = []
    for j, k in pairs:
        if not (0 <= j < d and 0 <= k < d):
            raise InvalidArgumentError(f"contrast pair ({j}, {k}) out of range for d={d}")
        est = float(theta[j] - theta[k])
        var = (
            cov.psi_hat[d + j, d + j] + cov.psi_hat[d + k, d + k] - 2.0 * cov.psi_hat[d + j, d + k]
        ) / cov.t
        coords.append(_coordinate_test(f"theta_{j + 1}-theta_{k + 1}", est, float(var), alpha))
    return TestReport(coordinates=tuple(coords), alpha=alpha, t=cov.t)


def egreedy_wlse_covariance(
    log: InteractionLog, arm: int, n_arms: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked-context weighted LSE for one arm and its robust covariance.

    Inverse-propensity-weighted sandwich: bread = weighted Gram of the
    arm's stacked contexts, meat = weighted squared-residual Gram.  The
    reference work for the comparator states asymptotic normality without
    a reusable formula, so this standard reconstruction is used.
    """
    mu = epsilon_greedy_wlse(log, arm, n_arms)
    mask = log.arms() == arm
    Z = stack_context_rows(log.contexts())[mask]
    r = log.rewards()[mask]
    w = 1.0 / log.propensities()[mask]
    bread = (Z * w[:, None]).T @ Z
    cond = float(np.linalg.cond(bread))
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        raise InferenceUnavailableError(
            f"weighted Gram condition number {cond:.3g} too large for inversion", cond
        )
    resid = r - Z @ mu
    meat = (Z * (w * w * resid * resid)[:, None]).T @ Z
    half = np.linalg.solve(bread, meat)
    covariance = np.linalg.solve(bread, half.T).T
    return mu, covariance


def egreedy_z_test(log: InteractionLog, arm: int, n_arms: int, alpha: float) -> TestReport:
    """Per-coordinate Z-tests of the stacked WLSE for one arm.

    Coordinate names follow the stacked layout: mu{arm+1}_{q+1} for
    q = 0..n_arms*d-1.
    """
    if len(log) == 0:
        raise InsufficientDataError("cannot test on an empty log")
    mu, covariance = egreedy_wlse_covariance(log, arm, n_arms)
    coords = tuple(
        _coordinate_test(
            f"mu{arm + 1}_{q + 1}", float(mu[q]), float(covariance[q, q]), alpha
        )
        for q in range(mu.shape[0])
    )
    return TestReport(coordinates=coords, alpha=alpha, t=len(log))
