"""Per-timestep affine-Gaussian dynamics from rollout transitions.

The transition block at step t is the 16-vector (x_t, u_t, x_{t+1}).  The
regression runs on the identity-shifted representation (x, u, x_{t+1}-x_t)
with a ridge term pulling the state block of the transition matrix toward
the identity; this is what keeps fits of the underactuated flight phases
well posed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..sim.rollout import Trajectory
from .gmm import GmmPrior, floor_eigenvalues, fit_gmm


class IllConditionedFitError(RuntimeError):
    def __init__(self, cond: float, step: int | None = None):
        self.cond = cond
        self.step = step
        where = "" if step is None else f" at step {step}"
        super().__init__(
            f"unregularized input covariance is ill conditioned{where} "
            f"(cond={cond:.3e}); a nonzero ridge is required")


class InsufficientDataError(RuntimeError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(
            f"no surviving trajectory provides a transition at step {step}")


@dataclass
class FitConfig:
    ridge_lambda: float = 1e-2
    gmm_k: int = 5
    gmm_max_iters: int = 50
    gmm_tol: float = 1e-5
    prior_pseudo_count: float = 1.0
    covariance_floor: float = 1e-6
    cond_limit: float = 1e8

    def __post_init__(self):
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")


@dataclass
class LinearGaussianDynamics:
    """Stacked per-step affine models x' ~ N(f_xu [x; u] + f_c, F)."""

    f_xu: np.ndarray           # (T, n, n+m)
    f_c: np.ndarray            # (T, n)
    F: np.ndarray              # (T, n, n)
    sample_counts: np.ndarray = None
    cond_numbers: np.ndarray = None

    @property
    def horizon(self) -> int:
        return self.f_xu.shape[0]

    @property
    def n_x(self) -> int:
        return self.f_xu.shape[1]

    def predict(self, t: int, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.f_xu[t] @ np.concatenate([x, u]) + self.f_c[t]

    def to_json(self) -> str:
        doc = {
            "f_xu": self.f_xu.tolist(),
            "f_c": self.f_c.tolist(),
            "F": self.F.tolist(),
            "sample_counts": None if self.sample_counts is None
            else self.sample_counts.tolist(),
            "cond_numbers": None if self.cond_numbers is None
            else self.cond_numbers.tolist(),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "LinearGaussianDynamics":
        doc = json.loads(text)
        return cls(
            f_xu=np.array(doc["f_xu"]), f_c=np.array(doc["f_c"]),
            F=np.array(doc["F"]),
            sample_counts=None if doc["sample_counts"] is None
            else np.array(doc["sample_counts"]),
            cond_numbers=None if doc["cond_numbers"] is None
            else np.array(doc["cond_numbers"]))


def transitions_from_trajectory(traj: Trajectory) -> np.ndarray:
    """Rows (x_t, u_t, x_{t+1}), one per executed step."""
    n = len(traj)
    return np.hstack([traj.states[:n], traj.actions, traj.states[1:n + 1]])


def symmetric_condition_number(mat: np.ndarray) -> float:
    w = np.abs(np.linalg.eigvalsh(0.5 * (mat + mat.T)))
    lo = w.min()
    if lo == 0.0:
        return np.inf
    return float(w.max() / lo)


def posterior_moments(samples_t: np.ndarray, prior: GmmPrior | None,
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Empirical moments of the step's transitions blended with the prior.

    Normal-inverse-Wishart style: the prior contributes ``pseudo_count``
    virtual samples at the mixture moments evaluated at the step's
    empirical mean.  pseudo_count = 0 returns the empirical moments.
    """
    samples_t = np.atleast_2d(np.asarray(samples_t, dtype=float))
    n = samples_t.shape[0]
    mu_emp = samples_t.mean(axis=0)
    diff = samples_t - mu_emp
    sig_emp = diff.T @ diff / n
    n0 = 0.0 if prior is None else float(prior.pseudo_count)
    if prior is None or n0 == 0.0:
        return mu_emp, 0.5 * (sig_emp + sig_emp.T)
    mu0, phi = prior.moments_at(mu_emp)
    denom = n0 + n
    mu = (n0 * mu0 + n * mu_emp) / denom
    shift = mu_emp - mu0
    sig = (n0 * phi + n * sig_emp
           + (n * n0 / denom) * np.outer(shift, shift)) / denom
    return mu, 0.5 * (sig + sig.T)


def fit_timestep(mean: np.ndarray, cov: np.ndarray, lam: float,
                 n_x: int = 7, covariance_floor: float = 1e-6,
                 cond_limit: float = 1e8,
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Affine model (f_xu, f_c, F) from joint moments over (x, u, x').

    The ridge acts on the shifted representation, so lam -> inf drives
    f_xu to (I 0) and f_c to the mean one-step state change.  With lam = 0
    an input covariance with condition number above ``cond_limit`` raises
    IllConditionedFitError instead of returning a garbage fit.
    """
    d = mean.shape[0]
    n_xu = d - n_x
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)

    # shift (x, u, x') -> (x, u, x' - x)
    mean_s = mean.copy()
    mean_s[n_xu:] -= mean[:n_x]
    cov_s = cov.copy()
    cov_s[n_xu:, :] -= cov[:n_x, :]
    cov_s[:, n_xu:] -= cov_s[:, :n_x]

    sig_xu = cov_s[:n_xu, :n_xu]
    sig_xu_d = cov_s[:n_xu, n_xu:]          # (n_xu, n_x)
    reg = sig_xu + lam * np.eye(n_xu)
    if lam == 0.0:
        cond = symmetric_condition_number(sig_xu)
        if cond > cond_limit:
            raise IllConditionedFitError(cond)
    f_shift = np.linalg.solve(reg, sig_xu_d).T
    f_xu = f_shift.copy()
    f_xu[:, :n_x] += np.eye(n_x)
    f_c = mean_s[n_xu:] - f_shift @ mean_s[:n_xu]
    F = cov_s[n_xu:, n_xu:] - f_shift @ sig_xu_d
    F = floor_eigenvalues(F, covariance_floor)
    return f_xu, f_c, F


def fit_trajectory_dynamics(trajectories: list[Trajectory], config: FitConfig,
                            history: list[np.ndarray] | None = None,
                            T: int | None = None, seed: int = 0,
                            ) -> LinearGaussianDynamics:
    """Per-step dynamics from N rollouts plus pooled-history GMM prior.

    Early-terminated rollouts contribute transitions only up to their
    termination; a step left with no surviving trajectory raises
    InsufficientDataError rather than extrapolating.
    """
    if not trajectories:
        raise ValueError("need at least one trajectory")
    n_x = trajectories[0].states.shape[1]
    for traj in trajectories:
        if traj.states.shape[1] != n_x or traj.actions.shape[1] != 2:
            raise ValueError("trajectory dimension mismatch")
    if T is None:
        T = max(len(traj) for traj in trajectories)

    current = [transitions_from_trajectory(traj) for traj in trajectories]
    pooled = np.vstack(current + list(history or []))
    k = min(config.gmm_k, pooled.shape[0])
    prior = fit_gmm(pooled, k=k, max_iters=config.gmm_max_iters,
                    tol=config.gmm_tol, seed=seed,
                    covariance_floor=config.covariance_floor,
                    pseudo_count=config.prior_pseudo_count)

    d = pooled.shape[1]
    n_u = d - 2 * n_x
    f_xu = np.empty((T, n_x, n_x + n_u))
    f_c = np.empty((T, n_x))
    F = np.empty((T, n_x, n_x))
    counts = np.zeros(T, dtype=int)
    conds = np.zeros(T)
    for t in range(T):
        rows = [tr[t] for tr in current if tr.shape[0] > t]
        if not rows:
            raise InsufficientDataError(t)
        counts[t] = len(rows)
        mean, cov = posterior_moments(np.array(rows), prior)
        conds[t] = symmetric_condition_number(
            cov[:n_x + n_u, :n_x + n_u]
            + config.ridge_lambda * np.eye(n_x + n_u))
        try:
            f_xu[t], f_c[t], F[t] = fit_timestep(
                mean, cov, config.ridge_lambda, n_x=n_x,
                covariance_floor=config.covariance_floor,
                cond_limit=config.cond_limit)
        except IllConditionedFitError as err:
            raise IllConditionedFitError(err.cond, step=t) from None

    return LinearGaussianDynamics(f_xu=f_xu, f_c=f_c, F=F,
                                  sample_counts=counts, cond_numbers=conds)
