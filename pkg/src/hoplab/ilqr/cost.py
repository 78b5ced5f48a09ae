"""Hopping task costs: a jump term near the ground, a landing-pose term in
the air, both exactly quadratic in (x, u)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Hip height (above ground) below which the jump cost takes over even
#: without contact.
JUMP_HEIGHT_THRESHOLD = 0.15

ANGLE_WEIGHT = 0.2
TORQUE_WEIGHT = 0.001
JUMP_TARGET = (0.0, 0.0)      # (phi_h, phi_k): extended leg, push off
LAND_TARGET = (1.3, 2.3)      # crouched leg, ready to land

_IDX_PHI_H = 2
_IDX_PHI_K = 4


@dataclass
class QuadraticCostExpansion:
    """Second-order model of the stage cost about one (x, u) point.

    ``grad``/``hess`` are over the 9-dim concatenated (x, u); for the task
    costs the Hessian is constant and PSD.
    """

    grad: np.ndarray       # (n+m,)
    hess: np.ndarray       # (n+m, n+m)
    const: float
    mode: str


def stage_cost(x: np.ndarray, u: np.ndarray, mode: str) -> float:
    t1, t2 = JUMP_TARGET if mode == "jump" else LAND_TARGET
    return (ANGLE_WEIGHT * (x[_IDX_PHI_H] - t1) ** 2
            + ANGLE_WEIGHT * (x[_IDX_PHI_K] - t2) ** 2
            + TORQUE_WEIGHT * (u[0] ** 2 + u[1] ** 2))


def select_cost_mode(x: np.ndarray) -> str:
    """Jump whenever in contact or close to the ground, land otherwise."""
    if x[6] > 0.5 or x[0] < JUMP_HEIGHT_THRESHOLD:
        return "jump"
    return "land"


def switching_cost(x: np.ndarray, u: np.ndarray) -> float:
    return stage_cost(x, u, select_cost_mode(x))


def quadratize_cost(mode: str, x: np.ndarray, u: np.ndarray,
                    ) -> QuadraticCostExpansion:
    n = x.shape[0]
    t1, t2 = JUMP_TARGET if mode == "jump" else LAND_TARGET
    grad = np.zeros(n + 2)
    grad[_IDX_PHI_H] = 2.0 * ANGLE_WEIGHT * (x[_IDX_PHI_H] - t1)
    grad[_IDX_PHI_K] = 2.0 * ANGLE_WEIGHT * (x[_IDX_PHI_K] - t2)
    grad[n] = 2.0 * TORQUE_WEIGHT * u[0]
    grad[n + 1] = 2.0 * TORQUE_WEIGHT * u[1]
    hess = np.zeros((n + 2, n + 2))
    hess[_IDX_PHI_H, _IDX_PHI_H] = 2.0 * ANGLE_WEIGHT
    hess[_IDX_PHI_K, _IDX_PHI_K] = 2.0 * ANGLE_WEIGHT
    hess[n, n] = 2.0 * TORQUE_WEIGHT
    hess[n + 1, n + 1] = 2.0 * TORQUE_WEIGHT
    return QuadraticCostExpansion(grad=grad, hess=hess,
                                  const=stage_cost(x, u, mode), mode=mode)


def augment_cost(expansion: QuadraticCostExpansion, k_old: np.ndarray,
                 K_old: np.ndarray, x_hat_old: np.ndarray,
                 sigma_old: np.ndarray, eta: float, x: np.ndarray,
                 u: np.ndarray) -> QuadraticCostExpansion:
    """Trust-region surrogate: cost/eta minus the old policy log-density.

    The Gaussian log-density is quadratic in (x, u), so the result is exact,
    not an approximation; constants are kept for line-search diagnostics.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    m, n = K_old.shape
    sigma_old = np.asarray(sigma_old, dtype=float)
    if sigma_old.ndim == 0:
        sigma_old = float(sigma_old) * np.eye(m)
    w = np.linalg.eigvalsh(sigma_old)
    if w.min() <= 0:
        raise ValueError("old policy covariance must be SPD")
    sig_inv = np.linalg.inv(sigma_old)

    # residual r = u - k - K (x - x_hat) = A [x; u] - d
    A = np.hstack([-K_old, np.eye(m)])
    d = k_old - K_old @ x_hat_old
    r = u - k_old - K_old @ (x - x_hat_old)
    grad = expansion.grad / eta + A.T @ (sig_inv @ r)
    hess = expansion.hess / eta + A.T @ sig_inv @ A
    const = (expansion.const / eta + 0.5 * r @ sig_inv @ r
             + 0.5 * (m * np.log(2.0 * np.pi) + np.log(np.linalg.det(sigma_old))))
    return QuadraticCostExpansion(grad=grad, hess=0.5 * (hess + hess.T),
                                  const=float(const), mode=expansion.mode)
