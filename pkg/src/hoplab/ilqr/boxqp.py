"""Box-constrained quadratic subproblem for the action update.

Cyclic coordinate minimization with clamping; on the 2-dim action space
this reaches the exact box-QP optimum and is fully deterministic.
"""
from __future__ import annotations

import numpy as np


def solve_box_qp(H: np.ndarray, g: np.ndarray, lo: np.ndarray,
                 hi: np.ndarray, tol: float = 1e-9, max_sweeps: int = 200,
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Minimize 0.5 x'Hx + g'x subject to lo <= x <= hi (H SPD).

    Returns the minimizer and a boolean mask of coordinates on a bound.
    """
    m = g.shape[0]
    x = np.clip(np.zeros(m), lo, hi)
    for _ in range(max_sweeps):
        delta = 0.0
        for i in range(m):
            grad_i = g[i] + H[i] @ x - H[i, i] * x[i]
            xi = -grad_i / H[i, i]
            xi = min(max(xi, lo[i]), hi[i])
            delta = max(delta, abs(xi - x[i]))
            x[i] = xi
        if delta < tol:
            break
    clamped = (x <= lo + 1e-12) | (x >= hi - 1e-12)
    return x, clamped
