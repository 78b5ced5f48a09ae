"""KL trust region between consecutive linear-Gaussian policies."""
from __future__ import annotations

import numpy as np

from .backward import BackwardPassError, backward_pass
from .cost import augment_cost
from .policy import TimeVaryingLinearGaussianPolicy


class TrustRegionInfeasibleError(RuntimeError):
    """No eta on the search grid satisfied the KL constraint."""


def gaussian_kl(mu0: np.ndarray, sig0: np.ndarray, mu1: np.ndarray,
                sig1: np.ndarray) -> float:
    """KL(N(mu0, sig0) || N(mu1, sig1)), closed form."""
    sig0 = np.atleast_2d(sig0)
    sig1 = np.atleast_2d(sig1)
    d = mu0.shape[0]
    if np.linalg.eigvalsh(sig0).min() <= 0 or np.linalg.eigvalsh(sig1).min() <= 0:
        raise ValueError("covariances must be SPD")
    s1_inv = np.linalg.inv(sig1)
    diff = mu1 - mu0
    return float(0.5 * (np.trace(s1_inv @ sig0) - d + diff @ s1_inv @ diff
                        + np.log(np.linalg.det(sig1) / np.linalg.det(sig0))))


def kl_step(p_old: TimeVaryingLinearGaussianPolicy,
            p_new: TimeVaryingLinearGaussianPolicy,
            nominal_states: np.ndarray,
            mean_clamp: float | None = None) -> np.ndarray:
    """Per-step KL(old || new) of the action distributions at the nominal
    states.

    With ``mean_clamp`` both means are clamped the way the rollout executor
    clamps them, so the divergence compares the distributions that actually
    drive the robot.
    """
    T = nominal_states.shape[0]
    m = p_old.n_u
    sig_old = p_old.sigma * np.eye(m)
    sig_new = p_new.sigma * np.eye(m)
    out = np.empty(T)
    for t in range(T):
        x = nominal_states[t]
        mu_old = p_old.action_mean(x, t)
        mu_new = p_new.action_mean(x, t)
        if mean_clamp is not None:
            mu_old = np.clip(mu_old, -mean_clamp, mean_clamp)
            mu_new = np.clip(mu_new, -mean_clamp, mean_clamp)
        out[t] = gaussian_kl(mu_old, sig_old, mu_new, sig_new)
    return out


def eta_linesearch(dynamics, base_expansions, p_old, nominal_states,
                   nominal_actions, u_limit: float, epsilon_kl: float,
                   policy_sigma: float, eta_grid: np.ndarray,
                   cost_switch_steps: set[int] = frozenset(),
                   reg_init: float = 1e-6, reg_cap: float = 1e-2,
                   include_offset_term: bool = True,
                   kl_mean_clamp: float | None = None):
    """Smallest eta whose backward-pass policy satisfies the KL bound.

    The grid is scanned from the most aggressive (smallest) eta upward;
    each candidate augments the cost with the old policy's log-density,
    runs the limited backward pass, and measures the mean per-step KL at
    the nominal states.  The accepted policy's covariance is fixed to
    policy_sigma * I.

    Returns (policy, eta, kl_values, backward_result).
    """
    T = nominal_actions.shape[0]
    failures: list[str] = []
    for eta in eta_grid:
        expansions = [
            augment_cost(base_expansions[t],
                         p_old.k[min(t, p_old.horizon - 1)],
                         p_old.K[min(t, p_old.horizon - 1)],
                         p_old.x_hat[min(t, p_old.horizon - 1)],
                         p_old.sigma * np.eye(p_old.n_u), float(eta),
                         nominal_states[t], nominal_actions[t])
            for t in range(T)
        ]
        try:
            bp = backward_pass(dynamics, expansions, nominal_actions,
                               u_limit, cost_switch_steps,
                               reg_init=reg_init, reg_cap=reg_cap,
                               include_offset_term=include_offset_term)
        except BackwardPassError as err:
            failures.append(f"eta={eta:.3g}: {err}")
            continue
        candidate = TimeVaryingLinearGaussianPolicy(
            k=nominal_actions + bp.du, K=bp.K.copy(),
            x_hat=nominal_states.copy(),
            u_hat=nominal_actions + bp.du, sigma=policy_sigma)
        kl = kl_step(p_old, candidate, nominal_states,
                     mean_clamp=kl_mean_clamp)
        if kl.mean() <= epsilon_kl:
            return candidate, float(eta), kl, bp
    raise TrustRegionInfeasibleError(
        f"no eta in [{eta_grid[0]:.3g}, {eta_grid[-1]:.3g}] met mean KL <= "
        f"{epsilon_kl}" + (f" ({len(failures)} backward failures)" if failures
                           else ""))
