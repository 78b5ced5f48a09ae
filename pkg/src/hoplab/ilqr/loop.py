"""Outer iLQR iteration: sample, fit, improve, extend the horizon."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..dynfit import (FitConfig, IllConditionedFitError, InsufficientDataError,
                      LinearGaussianDynamics, fit_trajectory_dynamics,
                      transitions_from_trajectory)
from ..sim import (CONTROL_DT, FALL_HEIGHT, RobotParams,
                   SimulationDivergedError, TerrainConfig, Trajectory,
                   observe, rollout, state_from_observation, step)
from .backward import BackwardPassError
from .cost import quadratize_cost, select_cost_mode, switching_cost
from .policy import TimeVaryingLinearGaussianPolicy, random_initial_policy
from .trust_region import TrustRegionInfeasibleError, eta_linesearch


@dataclass
class IlqrConfig:
    epsilon_kl: float = 0.5
    policy_sigma: float = 0.01
    torque_fraction: float = 0.9
    max_horizon_extension: int = 5      # steps per iteration (50 ms)
    eta_min: float = 1e-3
    eta_max: float = 1e3
    eta_steps: int = 21
    stability_height: float = 0.12
    stability_window: int = 10          # final 100 ms at 100 Hz
    max_T: int = 100
    initial_T: int = 30
    init_ff_fraction: float = 0.1
    quu_reg_init: float = 1e-6
    quu_reg_cap: float = 1e-2
    include_offset_term: bool = True
    rollouts_per_iter: int = 5
    history_window: int = 3             # past iterations feeding the GMM
    max_consecutive_failures: int = 3

    def __post_init__(self):
        if not (0.0 < self.torque_fraction <= 1.0):
            raise ValueError("torque_fraction must be in (0, 1]")
        for name in ("epsilon_kl", "policy_sigma", "max_T", "initial_T"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def eta_grid(self) -> np.ndarray:
        return np.logspace(np.log10(self.eta_min), np.log10(self.eta_max),
                           self.eta_steps)


@dataclass
class IterationReport:
    iteration: int
    T: int
    eta: float
    mean_kl: float
    max_kl: float
    mean_cost: float
    phvs: float
    fell: bool
    failure: str = ""

    CSV_HEADER = "iter,T,eta,mean_kl,mean_cost,phvs,fell"

    def csv_row(self) -> str:
        return (f"{self.iteration},{self.T},{self.eta!r},{self.mean_kl!r},"
                f"{self.mean_cost!r},{self.phvs!r},{int(self.fell)}")


class OptimizationAbortedError(RuntimeError):
    def __init__(self, message: str, reports: list[IterationReport]):
        super().__init__(message)
        self.reports = reports


def extend_horizon(current_T: int, latest_rollout: Trajectory,
                   config: IlqrConfig) -> int:
    """Grow the horizon only while the latest rollout stays stable."""
    if latest_rollout.terminated_early:
        return current_T
    window = latest_rollout.states[-config.stability_window:, 0]
    if window.min() <= config.stability_height:
        return current_T
    return min(current_T + config.max_horizon_extension, config.max_T)


def positive_hip_velocity_squared(traj: Trajectory) -> float:
    v = np.maximum(traj.hip_velocities(), 0.0)
    return float(np.mean(v * v))


def mean_rollout(policy, x0, terrain: TerrainConfig, T: int,
                 params: RobotParams, force_cutoff: float,
                 mean_clamp: float | None = None,
                 terminate_on_fall: bool = True) -> Trajectory:
    return rollout(policy, x0, terrain, T, noise_cov=None, rng_seed=0,
                   params=params, force_cutoff=force_cutoff,
                   cost_fn=switching_cost, mean_clamp=mean_clamp,
                   terminate_on_fall=terminate_on_fall)


def truncate_at_fall(traj: Trajectory) -> Trajectory:
    """View of a rollout under the task's fall-termination semantics."""
    low = np.where(traj.states[1:, 0] < FALL_HEIGHT)[0]
    if low.size == 0:
        return traj
    n = int(low[0]) + 1
    return Trajectory(states=traj.states[:n + 1], actions=traj.actions[:n],
                      costs=traj.costs[:n], events=traj.events[:n],
                      dt=traj.dt, terminated_early=True,
                      termination_reason="fall")


def pad_nominal(traj: Trajectory, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Expansion points for all T steps; a fallen rollout freezes its
    terminal state with zero action."""
    xs = traj.states[:-1]
    us = traj.actions
    if xs.shape[0] < T:
        pad = T - xs.shape[0]
        xs = np.vstack([xs, np.tile(traj.states[-1], (pad, 1))])
        us = np.vstack([us, np.zeros((pad, us.shape[1]))])
    return xs[:T], us[:T]


def fd_linearized_dynamics(nominal_states: np.ndarray,
                           nominal_actions: np.ndarray,
                           terrain: TerrainConfig, params: RobotParams,
                           force_cutoff: float, eps: float = 1e-4,
                           ) -> LinearGaussianDynamics:
    """Ground-truth local model: central differences of the one-step map.

    The binary contact coordinate is held fixed under perturbation (its
    finite difference is zero almost everywhere anyway).
    """
    T, n = nominal_states.shape
    m = nominal_actions.shape[1]

    def one_step(x, u):
        st = state_from_observation(x, terrain, params)
        new, _ = step(st, u, terrain, params=params)
        return observe(new, force_cutoff, terrain)

    f_xu = np.zeros((T, n, n + m))
    f_c = np.zeros((T, n))
    F = np.tile(1e-6 * np.eye(n), (T, 1, 1))
    for t in range(T):
        x, u = nominal_states[t], nominal_actions[t]
        x_next = one_step(x, u)
        for i in range(n):
            if i == 6:
                continue  # binary contact flag: zero column
            dx = np.zeros(n)
            dx[i] = eps
            f_xu[t][:, i] = (one_step(x + dx, u) - one_step(x - dx, u)) / (2 * eps)
        for j in range(m):
            du = np.zeros(m)
            du[j] = eps
            f_xu[t][:, n + j] = (one_step(x, u + du) - one_step(x, u - du)) / (2 * eps)
        f_c[t] = x_next - f_xu[t] @ np.concatenate([x, u])
    return LinearGaussianDynamics(f_xu=f_xu, f_c=f_c, F=F)


def ilqr_iterate(policy: TimeVaryingLinearGaussianPolicy, x0: np.ndarray,
                 terrain: TerrainConfig, params: RobotParams,
                 fit_config: FitConfig, config: IlqrConfig,
                 rng: np.random.Generator,
                 history: deque | None = None,
                 force_cutoff: float = 0.1,
                 use_ground_truth: bool = False,
                 iteration: int = 0,
                 ) -> tuple[TimeVaryingLinearGaussianPolicy, IterationReport]:
    """One outer iteration; returns the improved policy and its report.

    Samples stochastic rollouts at the policy's exploration covariance,
    fits (or finite-differences) local dynamics, improves the policy under
    the KL trust region, then may extend the horizon.
    """
    T = policy.horizon
    u_headroom = config.torque_fraction * params.tau_max
    noise_cov = policy.sigma * np.eye(policy.n_u)
    # learning rollouts run without the fall cutoff: the recovery/push data
    # just below it is exactly what the stance update needs
    trajs = [rollout(policy, x0, terrain, T, noise_cov=noise_cov,
                     rng_seed=int(rng.integers(2**31)), params=params,
                     force_cutoff=force_cutoff, cost_fn=switching_cost,
                     mean_clamp=u_headroom, terminate_on_fall=False)
             for _ in range(config.rollouts_per_iter)]

    # optimize only the data-covered prefix: beyond the longest rollout no
    # transition exists and the fit would have nothing to extrapolate from
    T_fit = min(T, max(len(tr) for tr in trajs))
    nominal = mean_rollout(policy, x0, terrain, T_fit, params, force_cutoff,
                           mean_clamp=u_headroom, terminate_on_fall=False)
    xs, us = pad_nominal(nominal, T_fit)

    if use_ground_truth:
        dynamics = fd_linearized_dynamics(xs, us, terrain, params,
                                          force_cutoff)
    else:
        dynamics = fit_trajectory_dynamics(
            trajs, fit_config, history=list(history or []), T=T_fit,
            seed=int(rng.integers(2**31)))
    if history is not None:
        history.append(np.vstack([transitions_from_trajectory(tr)
                                  for tr in trajs]))

    modes = [select_cost_mode(xs[t]) for t in range(T_fit)]
    switch_steps = {t for t in range(1, T_fit) if modes[t] != modes[t - 1]}
    expansions = [quadratize_cost(modes[t], xs[t], us[t])
                  for t in range(T_fit)]

    new_policy, eta, kl, _ = eta_linesearch(
        dynamics, expansions, policy, xs, us,
        u_limit=u_headroom,
        epsilon_kl=config.epsilon_kl, policy_sigma=config.policy_sigma,
        eta_grid=config.eta_grid(), cost_switch_steps=switch_steps,
        reg_init=config.quu_reg_init, reg_cap=config.quu_reg_cap,
        include_offset_term=config.include_offset_term,
        kl_mean_clamp=u_headroom)

    if T_fit < T:
        # splice the improved prefix onto the untouched tail
        new_policy = TimeVaryingLinearGaussianPolicy(
            k=np.vstack([new_policy.k, policy.k[T_fit:]]),
            K=np.vstack([new_policy.K, policy.K[T_fit:]]),
            x_hat=np.vstack([new_policy.x_hat, policy.x_hat[T_fit:]]),
            u_hat=np.vstack([new_policy.u_hat, policy.u_hat[T_fit:]]),
            sigma=new_policy.sigma)

    new_nominal = mean_rollout(new_policy, x0, terrain, T, params,
                               force_cutoff, mean_clamp=u_headroom,
                               terminate_on_fall=False)
    task_view = truncate_at_fall(new_nominal)
    new_T = extend_horizon(T, task_view, config)
    if new_T > T:
        new_policy = new_policy.extended(new_T)

    report = IterationReport(
        iteration=iteration, T=new_T, eta=eta, mean_kl=float(kl.mean()),
        max_kl=float(kl.max()),
        mean_cost=float(new_nominal.costs.mean()),
        phvs=positive_hip_velocity_squared(task_view),
        fell=task_view.terminated_early)
    return new_policy, report


def optimize_local_policy(x0: np.ndarray, n_iterations: int,
                          terrain: TerrainConfig | None = None,
                          params: RobotParams = RobotParams(),
                          fit_config: FitConfig | None = None,
                          config: IlqrConfig | None = None,
                          seed: int = 0, force_cutoff: float = 0.1,
                          use_ground_truth: bool = False,
                          ) -> tuple[TimeVaryingLinearGaussianPolicy,
                                     list[IterationReport]]:
    """Run the full optimization from a random initial policy.

    A failed iteration (ill-conditioned fit, missing data, infeasible trust
    region, diverged rollout) keeps the previous policy and retries with
    fresh samples; more than ``max_consecutive_failures`` in a row aborts.
    """
    terrain = terrain or TerrainConfig()
    fit_config = fit_config or FitConfig()
    config = config or IlqrConfig()
    rng = np.random.default_rng(seed)
    x0 = np.asarray(x0, dtype=float)
    policy = random_initial_policy(x0, config.initial_T, rng, params.tau_max,
                                   ff_fraction=config.init_ff_fraction,
                                   sigma=config.policy_sigma)
    history: deque = deque(maxlen=config.history_window)
    reports: list[IterationReport] = []
    failures = 0
    for i in range(n_iterations):
        try:
            policy, report = ilqr_iterate(
                policy, x0, terrain, params, fit_config, config, rng,
                history=history, force_cutoff=force_cutoff,
                use_ground_truth=use_ground_truth, iteration=i)
            failures = 0
        except (IllConditionedFitError, InsufficientDataError,
                TrustRegionInfeasibleError, BackwardPassError,
                SimulationDivergedError) as err:
            failures += 1
            report = IterationReport(
                iteration=i, T=policy.horizon, eta=float("nan"),
                mean_kl=float("nan"), max_kl=float("nan"),
                mean_cost=float("nan"), phvs=float("nan"), fell=True,
                failure=f"{type(err).__name__}: {err}")
            if failures >= config.max_consecutive_failures:
                reports.append(report)
                raise OptimizationAbortedError(
                    f"{failures} consecutive failed iterations; last: "
                    f"{report.failure}", reports) from err
        reports.append(report)
    return policy, reports
