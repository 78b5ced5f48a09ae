"""Control-limited backward pass over learned affine dynamics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dynfit.fit import LinearGaussianDynamics
from .boxqp import solve_box_qp
from .cost import QuadraticCostExpansion


class BackwardPassError(RuntimeError):
    """Action-space curvature could not be made positive definite."""


@dataclass
class BackwardPassResult:
    du: np.ndarray          # (T, m) feedforward changes
    K: np.ndarray           # (T, m, n) feedback gains, clamped rows zeroed
    V_x: np.ndarray         # (T, n) value gradients after each step
    V_xx: np.ndarray        # (T, n, n)
    clamped: np.ndarray     # (T, m) bool


def _spd_regularize(Q_uu: np.ndarray, reg_init: float, reg_cap: float,
                    ) -> np.ndarray:
    mu = 0.0
    while True:
        try:
            np.linalg.cholesky(Q_uu + mu * np.eye(Q_uu.shape[0]))
            return Q_uu + mu * np.eye(Q_uu.shape[0])
        except np.linalg.LinAlgError:
            mu = reg_init if mu == 0.0 else 2.0 * mu
            if mu > reg_cap:
                raise BackwardPassError(
                    f"Q_uu not SPD at regularization cap {reg_cap}") from None


def backward_pass(dynamics: LinearGaussianDynamics,
                  expansions: list[QuadraticCostExpansion],
                  u_hat: np.ndarray, u_limit: float,
                  cost_switch_steps: set[int] = frozenset(),
                  reg_init: float = 1e-6, reg_cap: float = 1e-2,
                  include_offset_term: bool = True) -> BackwardPassResult:
    """Riccati-style recursion with box-limited actions and value reset.

    The action change at each step solves a box QP so that the updated
    feedforward stays inside +-u_limit; feedback rows of clamped components
    are zeroed.  Value derivatives restart from zero at every cost-switch
    step so neither mode's value leaks across the switch.  With
    ``include_offset_term`` the state-gradient recursion carries the
    f_xu' V_xx f_c offset coupling term; disabling it gives the textbook
    deviation-coordinate recursion.
    """
    T = dynamics.horizon
    n = dynamics.n_x
    m = u_hat.shape[1]
    if len(expansions) != T:
        raise ValueError("one cost expansion per dynamics step required")

    du = np.zeros((T, m))
    Ks = np.zeros((T, m, n))
    V_x_out = np.zeros((T, n))
    V_xx_out = np.zeros((T, n, n))
    clamped_out = np.zeros((T, m), dtype=bool)

    V_x = np.zeros(n)
    V_xx = np.zeros((n, n))
    for t in range(T - 1, -1, -1):
        if (t + 1) in cost_switch_steps:
            V_x = np.zeros(n)
            V_xx = np.zeros((n, n))
        f = dynamics.f_xu[t]
        Q_z = expansions[t].grad + f.T @ V_x
        if include_offset_term:
            Q_z = Q_z + f.T @ (V_xx @ dynamics.f_c[t])
        Q_zz = expansions[t].hess + f.T @ V_xx @ f
        Q_zz = 0.5 * (Q_zz + Q_zz.T)

        Q_x, Q_u = Q_z[:n], Q_z[n:]
        Q_xx = Q_zz[:n, :n]
        Q_ux = Q_zz[n:, :n]
        Q_uu = _spd_regularize(Q_zz[n:, n:], reg_init, reg_cap)

        lo = -u_limit - u_hat[t]
        hi = u_limit - u_hat[t]
        du_t, clamped = solve_box_qp(Q_uu, Q_u, lo, hi)
        K_t = np.zeros((m, n))
        free = ~clamped
        if np.any(free):
            K_t[free] = -np.linalg.solve(Q_uu[np.ix_(free, free)],
                                         Q_ux[free])

        V_x = Q_x + K_t.T @ (Q_uu @ du_t) + K_t.T @ Q_u + Q_ux.T @ du_t
        V_xx = Q_xx + K_t.T @ Q_uu @ K_t + K_t.T @ Q_ux + Q_ux.T @ K_t
        V_xx = 0.5 * (V_xx + V_xx.T)
        w, vecs = np.linalg.eigh(V_xx)
        if w[0] < 0.0:
            # box clamping can leave slightly indefinite curvature; keep the
            # recursion PSD so downstream Q_uu stays well posed
            V_xx = (vecs * np.maximum(w, 0.0)) @ vecs.T

        du[t] = du_t
        Ks[t] = K_t
        V_x_out[t] = V_x
        V_xx_out[t] = V_xx
        clamped_out[t] = clamped

    return BackwardPassResult(du=du, K=Ks, V_x=V_x_out, V_xx=V_xx_out,
                              clamped=clamped_out)
