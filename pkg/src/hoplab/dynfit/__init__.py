from .gmm import GmmPrior, fit_gmm, floor_eigenvalues
from .fit import (FitConfig, IllConditionedFitError, InsufficientDataError,
                  LinearGaussianDynamics, fit_timestep,
                  fit_trajectory_dynamics, posterior_moments,
                  symmetric_condition_number, transitions_from_trajectory)

__all__ = [
    "GmmPrior", "fit_gmm", "floor_eigenvalues",
    "FitConfig", "IllConditionedFitError", "InsufficientDataError",
    "LinearGaussianDynamics", "fit_timestep", "fit_trajectory_dynamics",
    "posterior_moments", "symmetric_condition_number",
    "transitions_from_trajectory",
]
