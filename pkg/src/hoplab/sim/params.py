"""Robot and terrain parameter types for the rail hopper."""
from __future__ import annotations

import math
from dataclasses import dataclass, field


#: Contact force (N) above which the binary contact flag reads 1.  Far below
#: the static stance load (~2.55 N) and above integrator noise.
DEFAULT_FORCE_CUTOFF = 0.1

#: Control period (s).
CONTROL_DT = 0.01

#: Substeps per control period (4 kHz).  The joint damping over the small
#: coupled leg inertias yields decay rates up to ~4.5e3/s, which puts a
#: 1 kHz explicit scheme outside its stability region; 0.25 ms substeps
#: keep both integration phases stable with margin.
N_SUBSTEPS = 40


@dataclass(frozen=True)
class RobotParams:
    """Physical parameters of the one-legged vertical-rail hopper.

    The base (hip) slides on a vertical rail at x = 0.  The leg has two
    equal segments (hip-knee, knee-foot) modeled as point masses at the
    segment midpoints, plus a point mass at the base.
    """

    m_hip: float = 0.15
    m_upper: float = 0.1
    m_shank: float = 0.01
    leg_segment_length: float = 0.1
    tau_max: float = 1.3
    joint_damping: float = -0.05  # N*m*s/rad, applied as damping * qdot at each joint
    gravity: float = 9.81

    def __post_init__(self):
        if self.m_hip <= 0 or self.m_upper <= 0 or self.m_shank <= 0:
            raise ValueError("all masses must be positive")
        if self.tau_max <= 0:
            raise ValueError("tau_max must be positive")
        if self.joint_damping > 0:
            raise ValueError("joint_damping must oppose motion (<= 0)")
        if self.leg_segment_length <= 0:
            raise ValueError("leg_segment_length must be positive")

    @property
    def total_mass(self) -> float:
        return self.m_hip + self.m_upper + self.m_shank

    @property
    def leg_length(self) -> float:
        return 2.0 * self.leg_segment_length


@dataclass(frozen=True)
class TerrainChange:
    """A scheduled terrain change, applied at the first step with t >= time.

    A change that would place the new ground in collision with the robot is
    deferred until the first step where it no longer collides.
    """

    time: float
    floor_height: float
    floor_slope: float


@dataclass(frozen=True)
class TerrainConfig:
    """Ground plane z(x) = floor_height + tan(floor_slope) * x."""

    floor_height: float = 0.0
    floor_slope: float = 0.0
    change_schedule: tuple[TerrainChange, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if abs(self.floor_slope) >= math.pi / 2:
            raise ValueError("|floor_slope| must be < pi/2")
        for ch in self.change_schedule:
            if abs(ch.floor_slope) >= math.pi / 2:
                raise ValueError("|floor_slope| must be < pi/2 in schedule")

    def ground_z(self, x: float) -> float:
        return self.floor_height + math.tan(self.floor_slope) * x

    def with_plane(self, floor_height: float, floor_slope: float) -> "TerrainConfig":
        return TerrainConfig(floor_height, floor_slope, self.change_schedule)
