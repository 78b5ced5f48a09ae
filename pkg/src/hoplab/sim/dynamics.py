"""Rigid-body dynamics of the 3-DOF hopper chain.

Generalized coordinates q = (h, phi_h, phi_k):

* ``h``     -- base height on the vertical rail at x = 0,
* ``phi_h`` -- hip angle of the upper leg from the straight-down vertical,
* ``phi_k`` -- knee flexion angle (0 = straight leg); the shank direction
  angle from vertical is ``phi_h - phi_k``.

The equations of motion were derived by hand from the Lagrangian of the
three point masses (base, upper-segment midpoint, shank midpoint) and are
kept in closed scalar form: this module is the innermost loop of every
rollout, so it avoids numpy in favor of plain floats.
"""
from __future__ import annotations

import math

import numpy as np

from .params import RobotParams, TerrainConfig


class DegenerateImpactError(RuntimeError):
    """Raised when the impact projection J M^-1 J^T is numerically singular."""


class _Model:
    """Precomputed inertial constants for a RobotParams instance."""

    __slots__ = ("mt", "mu1", "mu2", "i1", "i2", "i12", "l1", "l2", "g",
                 "damping", "tau_max")

    def __init__(self, p: RobotParams):
        l1 = p.leg_segment_length
        l2 = p.leg_segment_length
        r1 = 0.5 * l1
        r2 = 0.5 * l2
        self.mt = p.m_hip + p.m_upper + p.m_shank
        self.mu1 = p.m_upper * r1 + p.m_shank * l1
        self.mu2 = p.m_shank * r2
        self.i1 = p.m_upper * r1 * r1 + p.m_shank * l1 * l1
        self.i2 = p.m_shank * r2 * r2
        self.i12 = p.m_shank * l1 * r2
        self.l1 = l1
        self.l2 = l2
        self.g = p.gravity
        self.damping = p.joint_damping
        self.tau_max = p.tau_max


_MODEL_CACHE: dict[RobotParams, _Model] = {}


def model_for(params: RobotParams) -> _Model:
    m = _MODEL_CACHE.get(params)
    if m is None:
        m = _Model(params)
        _MODEL_CACHE[params] = m
    return m


def _mass_elems(m: _Model, a: float, k: float):
    """Upper triangle of the symmetric mass matrix at pose (a, k)."""
    b = a - k
    sa = math.sin(a)
    sb = math.sin(b)
    ck = math.cos(k)
    m00 = m.mt
    m01 = m.mu1 * sa + m.mu2 * sb
    m02 = -m.mu2 * sb
    m11 = m.i1 + m.i2 + 2.0 * m.i12 * ck
    m12 = -m.i2 - m.i12 * ck
    m22 = m.i2
    return m00, m01, m02, m11, m12, m22


def _rhs(m: _Model, a: float, k: float, ad: float, kd: float,
         u_h: float, u_k: float):
    """Generalized force vector tau - bias - gravity (joint damping included)."""
    b = a - k
    bd = ad - kd
    sa = math.sin(a)
    ca = math.cos(a)
    sb = math.sin(b)
    cb = math.cos(b)
    sk = math.sin(k)
    bias_h = m.mu1 * ca * ad * ad + m.mu2 * cb * bd * bd
    bias_a = -m.i12 * sk * kd * (2.0 * ad - kd)
    bias_k = m.i12 * sk * ad * ad
    grav_h = m.g * m.mt
    grav_a = m.g * (m.mu1 * sa + m.mu2 * sb)
    grav_k = -m.g * m.mu2 * sb
    r0 = -bias_h - grav_h
    r1 = u_h + m.damping * ad - bias_a - grav_a
    r2 = u_k + m.damping * kd - bias_k - grav_k
    return r0, r1, r2


def _solve3(m00, m01, m02, m11, m12, m22, r0, r1, r2):
    """Solve the symmetric 3x3 system M x = r via the adjugate."""
    c00 = m11 * m22 - m12 * m12
    c01 = m02 * m12 - m01 * m22
    c02 = m01 * m12 - m02 * m11
    det = m00 * c00 + m01 * c01 + m02 * c02
    c11 = m00 * m22 - m02 * m02
    c12 = m01 * m02 - m00 * m12
    c22 = m00 * m11 - m01 * m01
    inv = 1.0 / det
    x0 = (c00 * r0 + c01 * r1 + c02 * r2) * inv
    x1 = (c01 * r0 + c11 * r1 + c12 * r2) * inv
    x2 = (c02 * r0 + c12 * r1 + c22 * r2) * inv
    return x0, x1, x2


def _contact_jacobian(m: _Model, a: float, k: float, slope: float):
    """Gradient of the normal gap of the foot w.r.t. q."""
    b = a - k
    j0 = math.cos(slope)
    j1 = m.l1 * math.sin(a - slope) + m.l2 * math.sin(b - slope)
    j2 = -m.l2 * math.sin(b - slope)
    return j0, j1, j2


def _jdot_qdot(m: _Model, a: float, k: float, ad: float, kd: float,
               slope: float) -> float:
    b = a - k
    bd = ad - kd
    return (m.l1 * ad * ad * math.cos(a - slope)
            + m.l2 * bd * bd * math.cos(b - slope))


def foot_point(m: _Model, h: float, a: float, k: float):
    b = a - k
    x = m.l1 * math.sin(a) + m.l2 * math.sin(b)
    z = h - m.l1 * math.cos(a) - m.l2 * math.cos(b)
    return x, z


def knee_point(m: _Model, h: float, a: float):
    return m.l1 * math.sin(a), h - m.l1 * math.cos(a)


def normal_gap(m: _Model, terrain_h: float, terrain_s: float,
               x: float, z: float) -> float:
    """Signed normal distance of a point above the ground plane."""
    return math.cos(terrain_s) * (z - terrain_h) - math.sin(terrain_s) * x


def _accel(m: _Model, h: float, a: float, k: float,
           hd: float, ad: float, kd: float,
           u_h: float, u_k: float, contact: bool,
           terrain_h: float, terrain_s: float):
    """Accelerations (and contact force) at the given state and input.

    With ``contact`` the foot-gap constraint is enforced at acceleration
    level through its Lagrange multiplier; the multiplier is returned so
    callers can detect contact break (lam < 0).
    """
    m00, m01, m02, m11, m12, m22 = _mass_elems(m, a, k)
    r0, r1, r2 = _rhs(m, a, k, ad, kd, u_h, u_k)
    if not contact:
        x0, x1, x2 = _solve3(m00, m01, m02, m11, m12, m22, r0, r1, r2)
        return x0, x1, x2, 0.0
    j0, j1, j2 = _contact_jacobian(m, a, k, terrain_s)
    # y = M^-1 rhs, w = M^-1 J^T
    y0, y1, y2 = _solve3(m00, m01, m02, m11, m12, m22, r0, r1, r2)
    w0, w1, w2 = _solve3(m00, m01, m02, m11, m12, m22, j0, j1, j2)
    jmj = j0 * w0 + j1 * w1 + j2 * w2
    gd2 = _jdot_qdot(m, a, k, ad, kd, terrain_s)
    lam = -(j0 * y0 + j1 * y1 + j2 * y2 + gd2) / jmj
    return y0 + w0 * lam, y1 + w1 * lam, y2 + w2 * lam, lam


def _impact(m: _Model, a: float, k: float, hd: float, ad: float, kd: float,
            terrain_s: float):
    """Momentum-preserving inelastic impact: project out the foot normal rate."""
    m00, m01, m02, m11, m12, m22 = _mass_elems(m, a, k)
    j0, j1, j2 = _contact_jacobian(m, a, k, terrain_s)
    w0, w1, w2 = _solve3(m00, m01, m02, m11, m12, m22, j0, j1, j2)
    jmj = j0 * w0 + j1 * w1 + j2 * w2
    if jmj <= 1e-12:
        raise DegenerateImpactError(
            f"impact projection singular (J M^-1 J^T = {jmj:.3e})")
    jv = j0 * hd + j1 * ad + j2 * kd
    s = jv / jmj
    return hd - w0 * s, ad - w1 * s, kd - w2 * s


def kinetic_energy(m: _Model, a: float, k: float,
                   hd: float, ad: float, kd: float) -> float:
    m00, m01, m02, m11, m12, m22 = _mass_elems(m, a, k)
    return 0.5 * (m00 * hd * hd + m11 * ad * ad + m22 * kd * kd) \
        + m01 * hd * ad + m02 * hd * kd + m12 * ad * kd


def mechanical_energy(params: RobotParams, q, qdot) -> float:
    """Kinetic plus gravitational potential energy (datum at q = 0 pose)."""
    m = model_for(params)
    h, a, k = float(q[0]), float(q[1]), float(q[2])
    hd, ad, kd = float(qdot[0]), float(qdot[1]), float(qdot[2])
    b = a - k
    pot = m.g * (m.mt * h - m.mu1 * math.cos(a) - m.mu2 * math.cos(b))
    return kinetic_energy(m, a, k, hd, ad, kd) + pot


def mass_matrix(params: RobotParams, q) -> np.ndarray:
    m = model_for(params)
    m00, m01, m02, m11, m12, m22 = _mass_elems(m, float(q[1]), float(q[2]))
    return np.array([[m00, m01, m02], [m01, m11, m12], [m02, m12, m22]])


def contact_jacobian(params: RobotParams, q,
                     terrain: TerrainConfig | None = None) -> np.ndarray:
    m = model_for(params)
    s = 0.0 if terrain is None else terrain.floor_slope
    return np.array(_contact_jacobian(m, float(q[1]), float(q[2]), s))


def forward_dynamics(params: RobotParams, q, qdot, tau,
                     contact_active: bool = False,
                     terrain: TerrainConfig | None = None):
    """Generalized accelerations under torque ``tau`` = (u_h, u_k).

    Returns ``(qddot, contact_force)``; the contact force is the Lagrange
    multiplier of the foot constraint (0 in flight).  A negative value
    signals that the contact would break -- it is reported, not raised.
    """
    m = model_for(params)
    s = 0.0 if terrain is None else terrain.floor_slope
    th = 0.0 if terrain is None else terrain.floor_height
    x0, x1, x2, lam = _accel(
        m, float(q[0]), float(q[1]), float(q[2]),
        float(qdot[0]), float(qdot[1]), float(qdot[2]),
        float(tau[0]), float(tau[1]), contact_active, th, s)
    return np.array([x0, x1, x2]), lam


def impact_map(params: RobotParams, q, qdot_minus,
               terrain: TerrainConfig | None = None) -> np.ndarray:
    """Post-impact velocities for an inelastic foot touchdown at pose q."""
    m = model_for(params)
    s = 0.0 if terrain is None else terrain.floor_slope
    hd, ad, kd = _impact(m, float(q[1]), float(q[2]),
                         float(qdot_minus[0]), float(qdot_minus[1]),
                         float(qdot_minus[2]), s)
    return np.array([hd, ad, kd])


def foot_position(params: RobotParams, q) -> np.ndarray:
    m = model_for(params)
    x, z = foot_point(m, float(q[0]), float(q[1]), float(q[2]))
    return np.array([x, z])


def knee_position(params: RobotParams, q) -> np.ndarray:
    m = model_for(params)
    x, z = knee_point(m, float(q[0]), float(q[1]))
    return np.array([x, z])
