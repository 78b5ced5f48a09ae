from .policy import TimeVaryingLinearGaussianPolicy, random_initial_policy
from .cost import (JUMP_HEIGHT_THRESHOLD, JUMP_TARGET, LAND_TARGET,
                   QuadraticCostExpansion, augment_cost, quadratize_cost,
                   select_cost_mode, stage_cost, switching_cost)
from .boxqp import solve_box_qp
from .backward import BackwardPassError, BackwardPassResult, backward_pass
from .trust_region import (TrustRegionInfeasibleError, eta_linesearch,
                           gaussian_kl, kl_step)
from .loop import (IlqrConfig, IterationReport, OptimizationAbortedError,
                   extend_horizon, fd_linearized_dynamics, ilqr_iterate,
                   mean_rollout, optimize_local_policy, pad_nominal,
                   positive_hip_velocity_squared)

__all__ = [
    "TimeVaryingLinearGaussianPolicy", "random_initial_policy",
    "JUMP_HEIGHT_THRESHOLD", "JUMP_TARGET", "LAND_TARGET",
    "QuadraticCostExpansion", "augment_cost", "quadratize_cost",
    "select_cost_mode", "stage_cost", "switching_cost",
    "solve_box_qp",
    "BackwardPassError", "BackwardPassResult", "backward_pass",
    "TrustRegionInfeasibleError", "eta_linesearch", "gaussian_kl", "kl_step",
    "IlqrConfig", "IterationReport", "OptimizationAbortedError",
    "extend_horizon", "fd_linearized_dynamics", "ilqr_iterate",
    "mean_rollout", "optimize_local_policy", "pad_nominal",
    "positive_hip_velocity_squared",
]
