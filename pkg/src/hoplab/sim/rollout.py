"""Policy rollouts and the trajectory record."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .params import (CONTROL_DT, DEFAULT_FORCE_CUTOFF, RobotParams,
                     TerrainConfig)
from .world import (SimState, body_collides, observe, point_gaps,
                    state_from_observation, step)

#: Hip lower than this above the ground counts as a fall.
FALL_HEIGHT = 0.1


class Policy(Protocol):
    def action_mean(self, x: np.ndarray, t: int) -> np.ndarray: ...


@dataclass
class Trajectory:
    """Time-indexed record of one rollout at the control rate.

    ``states`` has one more row than ``actions``; actions are the executed
    (clamped) torques.  ``events`` holds a per-step label such as "impact".
    """

    states: np.ndarray           # (n+1, 7) observations
    actions: np.ndarray          # (n, 2)
    costs: np.ndarray            # (n,)
    events: list[str]
    dt: float = CONTROL_DT
    terminated_early: bool = False
    termination_reason: str = ""

    def __len__(self) -> int:
        return self.actions.shape[0]

    @property
    def duration(self) -> float:
        return len(self) * self.dt

    def hip_velocities(self) -> np.ndarray:
        return self.states[:, 1]

    def contact_flags(self) -> np.ndarray:
        return self.states[:, 6]

    def flight_phase_count(self) -> int:
        """Number of takeoffs (contact flag transitions 1 -> 0)."""
        c = self.contact_flags() > 0.5
        return int(np.sum(c[:-1] & ~c[1:]))


CSV_HEADER = "t,h,hdot,phi_h,phidot_h,phi_k,phidot_k,c,u_h,u_k,cost,event"


def trajectory_to_csv(traj: Trajectory) -> str:
    lines = [CSV_HEADER]
    n = len(traj)
    for i in range(traj.states.shape[0]):
        x = traj.states[i]
        cells = [repr(i * traj.dt)] + [repr(float(v)) for v in x]
        if i < n:
            cells += [repr(float(traj.actions[i, 0])),
                      repr(float(traj.actions[i, 1])),
                      repr(float(traj.costs[i])), traj.events[i]]
        else:
            cells += ["", "", "", ""]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _noise_chol(noise_cov) -> np.ndarray | None:
    """Cholesky factor of the action noise covariance, or None if zero."""
    if noise_cov is None:
        return None
    cov = np.asarray(noise_cov, dtype=float)
    if cov.ndim == 0:
        cov = float(cov) * np.eye(2)
    if not np.allclose(cov, cov.T):
        raise ValueError("noise covariance must be symmetric")
    if np.all(cov == 0.0):
        return None
    w, v = np.linalg.eigh(cov)
    if w.min() < -1e-12:
        raise ValueError("noise covariance must be positive semidefinite")
    return v @ np.diag(np.sqrt(np.maximum(w, 0.0))) @ v.T


def rollout(policy: Policy, x0, terrain: TerrainConfig, T: int,
            noise_cov=None, rng_seed: int = 0,
            params: RobotParams = RobotParams(),
            force_cutoff: float = DEFAULT_FORCE_CUTOFF,
            cost_fn: Callable[[np.ndarray, np.ndarray], float] | None = None,
            mean_clamp: float | None = None,
            terminate_on_fall: bool = True) -> Trajectory:
    """Run ``policy`` for up to T control steps from observation ``x0``.

    Actions are sampled from N(mean, noise_cov) and clamped to the torque
    limits; with ``mean_clamp`` the mean itself is first clamped tighter
    (torque headroom reserved for exploration noise).  The rollout ends
    early on a fall (hip below 0.1 m above the ground) or a body-ground
    collision; ``terminate_on_fall=False`` drops the height cutoff (used
    when collecting dynamics-learning data) while collisions still stop
    the run.  Deterministic in ``rng_seed``.
    """
    rng = np.random.default_rng(rng_seed)
    chol = _noise_chol(noise_cov)
    tau_max = params.tau_max

    state = state_from_observation(np.asarray(x0, dtype=float), terrain, params)
    cur_terrain = TerrainConfig(terrain.floor_height, terrain.floor_slope)
    pending = sorted(terrain.change_schedule, key=lambda ch: ch.time)

    xs = [observe(state, force_cutoff, cur_terrain)]
    us: list[np.ndarray] = []
    costs: list[float] = []
    events: list[str] = []
    terminated = False
    reason = ""

    for t in range(T):
        # apply scheduled terrain changes; defer any that would collide
        while pending and pending[0].time <= state.time + 1e-12:
            ch = pending[0]
            cand = cur_terrain.with_plane(ch.floor_height, ch.floor_slope)
            gaps = point_gaps(params, state.q, cand)
            if min(gaps) <= 0.0:
                break  # deferred; retried next step
            cur_terrain = cand
            if state.in_contact and gaps[0] > 1e-9:
                state = SimState(q=state.q, qdot=state.qdot, in_contact=False,
                                 contact_force=0.0, time=state.time)
            pending.pop(0)

        x = xs[-1]
        u = np.asarray(policy.action_mean(x, t), dtype=float).copy()
        if mean_clamp is not None:
            np.clip(u, -mean_clamp, mean_clamp, out=u)
        if chol is not None:
            u += chol @ rng.standard_normal(2)
        np.clip(u, -tau_max, tau_max, out=u)

        state, ev = step(state, u, cur_terrain, params=params)
        x_next = observe(state, force_cutoff, cur_terrain)

        us.append(u)
        costs.append(0.0 if cost_fn is None else float(cost_fn(x, u)))
        events.append(ev.label())
        xs.append(x_next)

        if ev.body_collision:
            terminated = True
            reason = "body_collision"
            break
        if terminate_on_fall and x_next[0] < FALL_HEIGHT:
            terminated = True
            reason = "fall"
            break

    return Trajectory(states=np.array(xs), actions=np.array(us).reshape(len(us), 2),
                      costs=np.array(costs), events=events,
                      terminated_early=terminated, termination_reason=reason)
