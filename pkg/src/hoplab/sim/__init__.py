from .params import (CONTROL_DT, DEFAULT_FORCE_CUTOFF, N_SUBSTEPS,
                     RobotParams, TerrainChange, TerrainConfig)
from .dynamics import (DegenerateImpactError, contact_jacobian,
                       forward_dynamics, foot_position, impact_map,
                       knee_position, mass_matrix, mechanical_energy)
from .world import (PENETRATION_TOL, SimState, SimulationDivergedError,
                    StepEvents, body_collides, make_state, observe,
                    point_gaps, state_from_observation, step)
from .rollout import (FALL_HEIGHT, CSV_HEADER, Policy, Trajectory, rollout,
                      trajectory_to_csv)

__all__ = [
    "CONTROL_DT", "DEFAULT_FORCE_CUTOFF", "N_SUBSTEPS",
    "RobotParams", "TerrainChange", "TerrainConfig",
    "DegenerateImpactError", "contact_jacobian", "forward_dynamics",
    "foot_position", "impact_map", "knee_position", "mass_matrix",
    "mechanical_energy",
    "PENETRATION_TOL", "SimState", "SimulationDivergedError", "StepEvents",
    "body_collides", "make_state", "observe", "point_gaps",
    "state_from_observation", "step",
    "FALL_HEIGHT", "CSV_HEADER", "Policy", "Trajectory", "rollout",
    "trajectory_to_csv",
]
