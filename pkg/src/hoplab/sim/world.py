"""Simulation state, the control-rate stepper, and state observation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (_accel, _contact_jacobian, _impact, foot_point,
                       knee_point, model_for, normal_gap)
from .params import (CONTROL_DT, DEFAULT_FORCE_CUTOFF, N_SUBSTEPS,
                     RobotParams, TerrainConfig)

#: Foot must be on the plane to this accuracy while in contact (m).
PENETRATION_TOL = 1e-9


class SimulationDivergedError(RuntimeError):
    """Raised when the integrator produces a non-finite state."""


@dataclass(frozen=True)
class SimState:
    """Full mechanical state; a value, never mutated in place."""

    q: np.ndarray                # (h, phi_h, phi_k)
    qdot: np.ndarray
    in_contact: bool = False
    contact_force: float = 0.0
    time: float = 0.0

    def copy(self) -> "SimState":
        return replace(self, q=self.q.copy(), qdot=self.qdot.copy())


@dataclass(frozen=True)
class StepEvents:
    impact: bool = False
    release: bool = False
    apex: bool = False
    body_collision: bool = False

    def label(self) -> str:
        parts = []
        if self.impact:
            parts.append("impact")
        if self.release:
            parts.append("release")
        if self.apex:
            parts.append("apex")
        if self.body_collision:
            parts.append("body_collision")
        return "+".join(parts)


def make_state(params: RobotParams, h: float, phi_h: float, phi_k: float,
               hdot: float = 0.0, phidot_h: float = 0.0, phidot_k: float = 0.0,
               in_contact: bool = False, time: float = 0.0) -> SimState:
    return SimState(q=np.array([h, phi_h, phi_k]),
                    qdot=np.array([hdot, phidot_h, phidot_k]),
                    in_contact=in_contact, contact_force=0.0, time=time)


def state_from_observation(x, terrain: TerrainConfig,
                           params: RobotParams) -> SimState:
    """Build a SimState from a 7-vector observation (h above ground, ...)."""
    x = np.asarray(x, dtype=float)
    st = make_state(params,
                    h=float(x[0]) + terrain.floor_height,
                    phi_h=float(x[2]), phi_k=float(x[4]),
                    hdot=float(x[1]), phidot_h=float(x[3]),
                    phidot_k=float(x[5]),
                    in_contact=bool(x[6] > 0.5))
    return st


def observe(state: SimState, force_cutoff: float = DEFAULT_FORCE_CUTOFF,
            terrain: TerrainConfig | None = None) -> np.ndarray:
    """7-vector observation (h, hdot, phi_h, phidot_h, phi_k, phidot_k, c).

    ``h`` is the base height above the ground plane under the rail; the
    contact flag is 1 only when the contact force strictly exceeds the
    cutoff.
    """
    floor = 0.0 if terrain is None else terrain.floor_height
    c = 1.0 if state.contact_force > force_cutoff else 0.0
    return np.array([state.q[0] - floor, state.qdot[0],
                     state.q[1], state.qdot[1],
                     state.q[2], state.qdot[2], c])


def body_collides(params: RobotParams, q, terrain: TerrainConfig) -> bool:
    """True if the knee or the base point is at or below the ground plane."""
    m = model_for(params)
    h, a, k = float(q[0]), float(q[1]), float(q[2])
    th, ts = terrain.floor_height, terrain.floor_slope
    if normal_gap(m, th, ts, 0.0, h) <= 0.0:
        return True
    kx, kz = knee_point(m, h, a)
    return normal_gap(m, th, ts, kx, kz) <= 0.0


def point_gaps(params: RobotParams, q, terrain: TerrainConfig) -> tuple[float, float, float]:
    """Normal gaps of (foot, knee, base) above the terrain plane."""
    m = model_for(params)
    h, a, k = float(q[0]), float(q[1]), float(q[2])
    th, ts = terrain.floor_height, terrain.floor_slope
    fx, fz = foot_point(m, h, a, k)
    kx, kz = knee_point(m, h, a)
    return (normal_gap(m, th, ts, fx, fz),
            normal_gap(m, th, ts, kx, kz),
            normal_gap(m, th, ts, 0.0, h))


def _project_foot_to_ground(m, h, a, k, th, ts):
    """Least-squares shift of q putting the foot exactly on the plane."""
    for _ in range(4):
        fx, fz = foot_point(m, h, a, k)
        gap = normal_gap(m, th, ts, fx, fz)
        if abs(gap) < 1e-13:
            break
        j0, j1, j2 = _contact_jacobian(m, a, k, ts)
        s = gap / (j0 * j0 + j1 * j1 + j2 * j2)
        h -= j0 * s
        a -= j1 * s
        k -= j2 * s
    return h, a, k


def _project_contact_velocity(m, a, k, hd, ad, kd, ts):
    """Mass-weighted removal of the foot normal velocity (keeps KE down)."""
    return _impact(m, a, k, hd, ad, kd, ts)


def _flight_rk4(m, h, a, k, hd, ad, kd, u_h, u_k, dt, th, ts):
    """One unconstrained RK4 substep; keeps flight energy drift ~1e-13 J/s."""
    p10, p11, p12, _ = _accel(m, h, a, k, hd, ad, kd, u_h, u_k, False, th, ts)
    hdt = 0.5 * dt
    h2 = h + hdt * hd
    a2 = a + hdt * ad
    k2 = k + hdt * kd
    hd2 = hd + hdt * p10
    ad2 = ad + hdt * p11
    kd2 = kd + hdt * p12
    p20, p21, p22, _ = _accel(m, h2, a2, k2, hd2, ad2, kd2, u_h, u_k, False, th, ts)
    h3 = h + hdt * hd2
    a3 = a + hdt * ad2
    k3 = k + hdt * kd2
    hd3 = hd + hdt * p20
    ad3 = ad + hdt * p21
    kd3 = kd + hdt * p22
    p30, p31, p32, _ = _accel(m, h3, a3, k3, hd3, ad3, kd3, u_h, u_k, False, th, ts)
    h4 = h + dt * hd3
    a4 = a + dt * ad3
    k4 = k + dt * kd3
    hd4 = hd + dt * p30
    ad4 = ad + dt * p31
    kd4 = kd + dt * p32
    p40, p41, p42, _ = _accel(m, h4, a4, k4, hd4, ad4, kd4, u_h, u_k, False, th, ts)
    sixth = dt / 6.0
    return (h + sixth * (hd + 2.0 * hd2 + 2.0 * hd3 + hd4),
            a + sixth * (ad + 2.0 * ad2 + 2.0 * ad3 + ad4),
            k + sixth * (kd + 2.0 * kd2 + 2.0 * kd3 + kd4),
            hd + sixth * (p10 + 2.0 * p20 + 2.0 * p30 + p40),
            ad + sixth * (p11 + 2.0 * p21 + 2.0 * p31 + p41),
            kd + sixth * (p12 + 2.0 * p22 + 2.0 * p32 + p42))


def step(state: SimState, action, terrain: TerrainConfig,
         dt: float = CONTROL_DT, params: RobotParams = RobotParams(),
         n_sub: int = N_SUBSTEPS) -> tuple[SimState, StepEvents]:
    """Advance one control period with semi-implicit Euler substeps.

    Contact activation applies the impulsive impact map and pins the foot
    to the plane; contact releases when its force multiplier goes negative.
    A knee or base point at/below ground is a terminal body collision (the
    state is returned at the collision substep).
    """
    m = model_for(params)
    u_h = float(min(max(action[0], -m.tau_max), m.tau_max))
    u_k = float(min(max(action[1], -m.tau_max), m.tau_max))
    th, ts = terrain.floor_height, terrain.floor_slope

    h, a, k = float(state.q[0]), float(state.q[1]), float(state.q[2])
    hd, ad, kd = float(state.qdot[0]), float(state.qdot[1]), float(state.qdot[2])
    contact = state.in_contact
    lam = state.contact_force
    hd_start = hd

    sub_dt = dt / n_sub
    impact_evt = False
    release_evt = False
    collision_evt = False

    for _ in range(n_sub):
        if contact:
            dd0, dd1, dd2, lam = _accel(m, h, a, k, hd, ad, kd, u_h, u_k,
                                        True, th, ts)
            if lam < 0.0:
                contact = False
                release_evt = True
                lam = 0.0
        if contact:
            # projected semi-implicit Euler on the constraint manifold
            hd += dd0 * sub_dt
            ad += dd1 * sub_dt
            kd += dd2 * sub_dt
            h += hd * sub_dt
            a += ad * sub_dt
            k += kd * sub_dt
            h, a, k = _project_foot_to_ground(m, h, a, k, th, ts)
            hd, ad, kd = _project_contact_velocity(m, a, k, hd, ad, kd, ts)
        else:
            h, a, k, hd, ad, kd = _flight_rk4(m, h, a, k, hd, ad, kd,
                                              u_h, u_k, sub_dt, th, ts)
            fx, fz = foot_point(m, h, a, k)
            gap = normal_gap(m, th, ts, fx, fz)
            if gap <= 0.0:
                j0, j1, j2 = _contact_jacobian(m, a, k, ts)
                closing = j0 * hd + j1 * ad + j2 * kd
                if gap < -PENETRATION_TOL or closing < 0.0:
                    h, a, k = _project_foot_to_ground(m, h, a, k, th, ts)
                    hd, ad, kd = _impact(m, a, k, hd, ad, kd, ts)
                    contact = True
                    impact_evt = True
                    # force on the very touchdown substep, for observation
                    _, _, _, lam = _accel(m, h, a, k, hd, ad, kd, u_h, u_k,
                                          True, th, ts)
                    if lam < 0.0:
                        contact = False
                        release_evt = True
                        lam = 0.0

        # terminal body-ground collision: stop mid-period
        if normal_gap(m, th, ts, 0.0, h) <= 0.0:
            collision_evt = True
            break
        kx, kz = knee_point(m, h, a)
        if normal_gap(m, th, ts, kx, kz) <= 0.0:
            collision_evt = True
            break

    if not (math.isfinite(h) and math.isfinite(a) and math.isfinite(k)
            and math.isfinite(hd) and math.isfinite(ad) and math.isfinite(kd)):
        raise SimulationDivergedError(
            f"non-finite state at t={state.time + dt:.3f}")

    if not contact:
        lam = 0.0
    apex = (not contact) and (not impact_evt) and hd_start >= 0.0 and hd < 0.0

    new_state = SimState(q=np.array([h, a, k]), qdot=np.array([hd, ad, kd]),
                         in_contact=contact, contact_force=lam,
                         time=state.time + dt)
    events = StepEvents(impact=impact_evt, release=release_evt, apex=apex,
                        body_collision=collision_evt)
    return new_state, events
