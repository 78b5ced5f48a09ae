"""Time-varying linear-Gaussian feedback policy."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass
class TimeVaryingLinearGaussianPolicy:
    """u_t ~ N(k_t + K_t (x - x_hat_t), sigma * I).

    ``u_hat`` keeps the nominal actions the policy was synthesized around.
    Queries beyond the horizon hold the terminal step's controller.
    """

    k: np.ndarray          # (T, m)
    K: np.ndarray          # (T, m, n)
    x_hat: np.ndarray      # (T, n)
    u_hat: np.ndarray      # (T, m)
    sigma: float = 0.01

    @property
    def horizon(self) -> int:
        return self.k.shape[0]

    @property
    def n_x(self) -> int:
        return self.K.shape[2]

    @property
    def n_u(self) -> int:
        return self.k.shape[1]

    def action_mean(self, x: np.ndarray, t: int) -> np.ndarray:
        t = min(t, self.horizon - 1)
        return self.k[t] + self.K[t] @ (x - self.x_hat[t])

    def covariance(self, t: int) -> np.ndarray:
        return self.sigma * np.eye(self.n_u)

    def extended(self, new_T: int) -> "TimeVaryingLinearGaussianPolicy":
        """Grow the horizon by holding the terminal step's controller."""
        if new_T <= self.horizon:
            return self
        pad = new_T - self.horizon
        return TimeVaryingLinearGaussianPolicy(
            k=np.vstack([self.k, np.repeat(self.k[-1:], pad, axis=0)]),
            K=np.vstack([self.K, np.repeat(self.K[-1:], pad, axis=0)]),
            x_hat=np.vstack([self.x_hat, np.repeat(self.x_hat[-1:], pad, axis=0)]),
            u_hat=np.vstack([self.u_hat, np.repeat(self.u_hat[-1:], pad, axis=0)]),
            sigma=self.sigma)

    def to_json(self) -> str:
        return json.dumps({
            "T": self.horizon,
            "sigma": self.sigma,
            "k": self.k.tolist(),
            "K": self.K.tolist(),
            "x_hat": self.x_hat.tolist(),
            "u_hat": self.u_hat.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "TimeVaryingLinearGaussianPolicy":
        doc = json.loads(text)
        pol = cls(k=np.array(doc["k"]), K=np.array(doc["K"]),
                  x_hat=np.array(doc["x_hat"]), u_hat=np.array(doc["u_hat"]),
                  sigma=float(doc["sigma"]))
        if pol.horizon != int(doc["T"]):
            raise ValueError("inconsistent policy horizon in document")
        return pol


def random_initial_policy(x0: np.ndarray, T: int, rng: np.random.Generator,
                          tau_max: float, ff_fraction: float = 0.1,
                          sigma: float = 0.01, n_u: int = 2,
                          ) -> TimeVaryingLinearGaussianPolicy:
    """Random feedforward around a constant nominal state (no feedback)."""
    n = x0.shape[0]
    k = rng.uniform(-ff_fraction * tau_max, ff_fraction * tau_max,
                    size=(T, n_u))
    return TimeVaryingLinearGaussianPolicy(
        k=k, K=np.zeros((T, n_u, n)),
        x_hat=np.tile(np.asarray(x0, dtype=float), (T, 1)),
        u_hat=k.copy(), sigma=sigma)
