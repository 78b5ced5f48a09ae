"""Torque and feedback-structured network policies."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .mlp import MlpParams, init_mlp, mlp_forward

TRUNK_SIZES = [7, 10, 10, 10]
N_STATE = 7
N_ACTION = 2


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Normalizer":
        std = x.std(axis=0)
        return cls(mean=x.mean(axis=0), std=np.maximum(std, 1e-6))

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


def feedback_compose(k: np.ndarray, K: np.ndarray, x_hat: np.ndarray,
                     x: np.ndarray) -> np.ndarray:
    """Action mean k + K (x - x_hat) of the structured policy."""
    return k + K @ (x - x_hat)


@dataclass
class TorqueNet:
    """Direct state -> torque-mean network."""

    mlp: MlpParams
    norm: Normalizer

    kind = "torque"

    @classmethod
    def create(cls, rng: np.random.Generator,
               norm: Normalizer | None = None) -> "TorqueNet":
        return cls(mlp=init_mlp(TRUNK_SIZES + [N_ACTION], rng),
                   norm=norm or Normalizer.identity(N_STATE))

    def action_mean(self, x: np.ndarray, t: int = 0) -> np.ndarray:
        out, _ = mlp_forward(self.mlp, self.norm.apply(np.asarray(x, float)))
        return out

    def batch_mean(self, x: np.ndarray) -> np.ndarray:
        out, _ = mlp_forward(self.mlp, self.norm.apply(x))
        return out

    def parameter_arrays(self) -> list[np.ndarray]:
        return self.mlp.weights + self.mlp.biases


@dataclass
class FeedbackNet:
    """Shared trunk with feedforward, gain-matrix, and nominal-state heads.

    The action mean composes the heads on the raw (unnormalized) state:
    g = k(x) + K(x) (x - x_hat(x)).
    """

    trunk: MlpParams
    head_k: MlpParams        # 10 -> 2
    head_K: MlpParams        # 10 -> 14, reshaped (2, 7)
    head_x: MlpParams        # 10 -> 7
    norm: Normalizer

    kind = "feedback"

    @classmethod
    def create(cls, rng: np.random.Generator,
               norm: Normalizer | None = None) -> "FeedbackNet":
        return cls(trunk=init_mlp(TRUNK_SIZES, rng),
                   head_k=init_mlp([10, N_ACTION], rng),
                   head_K=init_mlp([10, N_ACTION * N_STATE], rng),
                   head_x=init_mlp([10, N_STATE], rng),
                   norm=norm or Normalizer.identity(N_STATE))

    def heads(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(k, K, x_hat) for a single raw state."""
        h = elu_trunk(self.trunk, self.norm.apply(np.asarray(x, float)))
        k, _ = mlp_forward(self.head_k, h)
        K_flat, _ = mlp_forward(self.head_K, h)
        x_hat, _ = mlp_forward(self.head_x, h)
        return k, K_flat.reshape(N_ACTION, N_STATE), x_hat

    def action_mean(self, x: np.ndarray, t: int = 0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k, K, x_hat = self.heads(x)
        return feedback_compose(k, K, x_hat, x)

    def batch_heads(self, x: np.ndarray,
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        h = elu_trunk(self.trunk, self.norm.apply(x))
        k, _ = mlp_forward(self.head_k, h)
        K_flat, _ = mlp_forward(self.head_K, h)
        x_hat, _ = mlp_forward(self.head_x, h)
        return k, K_flat, x_hat

    def parameter_arrays(self) -> list[np.ndarray]:
        out = []
        for p in (self.trunk, self.head_k, self.head_K, self.head_x):
            out.extend(p.weights)
            out.extend(p.biases)
        return out


def elu_trunk(trunk: MlpParams, x: np.ndarray) -> np.ndarray:
    """Trunk forward whose OUTPUT layer is also ELU-activated.

    The trunk's last hidden layer feeds the linear heads, so unlike a
    plain MLP its final layer keeps the hidden-layer activation.
    """
    from .mlp import elu
    h = np.atleast_2d(np.asarray(x, dtype=float))
    squeeze = np.asarray(x).ndim == 1
    for w, b in zip(trunk.weights, trunk.biases):
        h = elu(h @ w + b)
    return h[0] if squeeze else h


def act(net, x: np.ndarray, sigma, rng: np.random.Generator,
        tau_max: float = 1.3) -> np.ndarray:
    """Sample an action from the network policy and clamp to the limits."""
    mean = net.action_mean(x)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim == 0:
        sigma = float(sigma) * np.eye(N_ACTION)
    if np.any(sigma != 0.0):
        w, v = np.linalg.eigh(sigma)
        if w.min() < -1e-12:
            raise ValueError("sigma must be PSD")
        chol = (v * np.sqrt(np.maximum(w, 0.0))) @ v.T
        mean = mean + chol @ rng.standard_normal(N_ACTION)
    return np.clip(mean, -tau_max, tau_max)


def _mlp_doc(p: MlpParams) -> dict:
    return {"sizes": p.layer_sizes,
            "weights": [w.tolist() for w in p.weights],
            "biases": [b.tolist() for b in p.biases]}


def _mlp_from_doc(doc: dict) -> MlpParams:
    return MlpParams([np.array(w) for w in doc["weights"]],
                     [np.array(b) for b in doc["biases"]])


def save_net(net, train_config: dict | None = None) -> str:
    doc = {"kind": net.kind,
           "normalization": {"mean": net.norm.mean.tolist(),
                             "std": net.norm.std.tolist()},
           "train_config": train_config or {}}
    if net.kind == "torque":
        doc["mlp"] = _mlp_doc(net.mlp)
    else:
        doc["trunk"] = _mlp_doc(net.trunk)
        doc["head_k"] = _mlp_doc(net.head_k)
        doc["head_K"] = _mlp_doc(net.head_K)
        doc["head_x"] = _mlp_doc(net.head_x)
    return json.dumps(doc)


def load_net(text: str):
    doc = json.loads(text)
    norm = Normalizer(mean=np.array(doc["normalization"]["mean"]),
                      std=np.array(doc["normalization"]["std"]))
    if doc["kind"] == "torque":
        return TorqueNet(mlp=_mlp_from_doc(doc["mlp"]), norm=norm)
    if doc["kind"] == "feedback":
        return FeedbackNet(trunk=_mlp_from_doc(doc["trunk"]),
                           head_k=_mlp_from_doc(doc["head_k"]),
                           head_K=_mlp_from_doc(doc["head_K"]),
                           head_x=_mlp_from_doc(doc["head_x"]),
                           norm=norm)
    raise ValueError(f"unknown network kind {doc['kind']!r}")
