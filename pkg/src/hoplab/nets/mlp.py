"""Minimal dense network machinery: ELU MLP, reverse-mode gradients, Adam."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def elu(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, z, np.expm1(z))


def elu_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, 1.0, np.exp(z))


@dataclass
class MlpParams:
    """Dense layers with ELU on hidden layers, identity on the output."""

    weights: list[np.ndarray]      # (fan_in, fan_out) per layer
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])

    def assign_flat(self, vec: np.ndarray) -> None:
        i = 0
        for arr in self.weights + self.biases:
            arr[...] = vec[i:i + arr.size].reshape(arr.shape)
            i += arr.size


def init_mlp(layer_sizes: list[int], rng: np.random.Generator) -> MlpParams:
    """Fan-in scaled uniform initialization."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def mlp_forward(params: MlpParams, x: np.ndarray,
                ) -> tuple[np.ndarray, list[np.ndarray]]:
    """Batched forward pass; returns output and cached layer inputs.

    The cache holds the input of every layer (post-activation of the
    previous one) followed by each hidden pre-activation, as needed by
    ``mlp_backward``.
    """
    squeeze = x.ndim == 1
    h = np.atleast_2d(np.asarray(x, dtype=float))
    if h.shape[1] != params.weights[0].shape[0]:
        raise ValueError(
            f"input dim {h.shape[1]} != {params.weights[0].shape[0]}")
    n_layers = len(params.weights)
    cache = [h]
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if i < n_layers - 1:
            cache.append(z)
            h = elu(z)
            cache.append(h)
        else:
            h = z
    out = h[0] if squeeze else h
    return out, cache


def mlp_backward(params: MlpParams, cache: list[np.ndarray],
                 grad_out: np.ndarray,
                 ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Parameter gradients given d(loss)/d(output), summed over the batch."""
    grad_out = np.atleast_2d(grad_out)
    n_layers = len(params.weights)
    grads_w = [None] * n_layers
    grads_b = [None] * n_layers
    g = grad_out
    for i in range(n_layers - 1, -1, -1):
        layer_in = cache[2 * i]
        grads_w[i] = layer_in.T @ g
        grads_b[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ params.weights[i].T) * elu_grad(cache[2 * i - 1])
    return grads_w, grads_b


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, arrays: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(a) for a in arrays],
                   v=[np.zeros_like(a) for a in arrays])


def adam_update(arrays: list[np.ndarray], grads: list[np.ndarray],
                state: AdamState, lr: float, beta1: float = 0.9,
                beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One in-place Adam step over a flat list of parameter arrays."""
    state.step += 1
    t = state.step
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        a -= lr * m_hat / (np.sqrt(v_hat) + eps)
