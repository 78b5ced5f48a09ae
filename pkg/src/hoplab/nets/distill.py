"""Supervised distillation of time-varying controllers into networks."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .mlp import AdamState, adam_update, elu_grad, mlp_backward, mlp_forward
from .policy_nets import FeedbackNet, TorqueNet


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 1024
    lr_torque: float = 1e-4
    lr_feedback: float = 1e-3
    n_batches: int = 20_000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "lr_torque", "lr_feedback", "n_batches"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("batch_size", "lr_torque", "lr_feedback", "n_batches",
                 "adam_beta1", "adam_beta2", "adam_eps", "seed")}


@dataclass
class DistillationDataset:
    """Visited states with the expert's commanded mean and controller terms.

    ``g`` is the noise-free action mean the expert commanded at x; ``k``,
    ``K`` and ``x_hat`` are its controller terms at that step.  Provenance
    columns identify (policy, noise level gamma, episode, step).
    """

    x: np.ndarray          # (N, 7)
    g: np.ndarray          # (N, 2)
    k: np.ndarray          # (N, 2)
    K: np.ndarray          # (N, 2, 7)
    x_hat: np.ndarray      # (N, 7)
    policy_id: np.ndarray  # (N,)
    gamma: np.ndarray      # (N,)
    episode: np.ndarray    # (N,)
    t: np.ndarray          # (N,)

    def __len__(self) -> int:
        return self.x.shape[0]

    def subset(self, idx) -> "DistillationDataset":
        return DistillationDataset(
            x=self.x[idx], g=self.g[idx], k=self.k[idx], K=self.K[idx],
            x_hat=self.x_hat[idx], policy_id=self.policy_id[idx],
            gamma=self.gamma[idx], episode=self.episode[idx], t=self.t[idx])

    def shuffled(self, seed: int) -> "DistillationDataset":
        idx = np.random.default_rng(seed).permutation(len(self))
        return self.subset(idx)

    CSV_HEADER = (",".join(f"x{i}" for i in range(7)) + ",g0,g1,k0,k1,"
                  + ",".join(f"K{i}{j}" for i in range(2) for j in range(7))
                  + "," + ",".join(f"xhat{i}" for i in range(7))
                  + ",policy,gamma,episode,t")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.CSV_HEADER + "\n")
        flat_K = self.K.reshape(len(self), 14)
        for i in range(len(self)):
            row = np.concatenate([self.x[i], self.g[i], self.k[i], flat_K[i],
                                  self.x_hat[i]])
            buf.write(",".join(repr(float(v)) for v in row))
            buf.write(f",{int(self.policy_id[i])},{float(self.gamma[i])!r},"
                      f"{int(self.episode[i])},{int(self.t[i])}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DistillationDataset":
        lines = text.strip().split("\n")
        if lines[0] != cls.CSV_HEADER:
            raise ValueError("unrecognized dataset header")
        rows = np.array([[float(v) for v in ln.split(",")]
                         for ln in lines[1:]])
        n = rows.shape[0]
        return cls(x=rows[:, 0:7], g=rows[:, 7:9], k=rows[:, 9:11],
                   K=rows[:, 11:25].reshape(n, 2, 7), x_hat=rows[:, 25:32],
                   policy_id=rows[:, 32].astype(int), gamma=rows[:, 33],
                   episode=rows[:, 34].astype(int), t=rows[:, 35].astype(int))


def distill_loss(net, batch: DistillationDataset) -> float:
    """Mean squared supervision error of the network on the batch.

    Torque nets regress the commanded mean; feedback nets regress all three
    controller heads with equal weight (gain matrices flattened).
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    if net.kind == "torque":
        pred = net.batch_mean(batch.x)
        return float(np.sum((batch.g - pred) ** 2) / len(batch))
    k_hat, K_hat, x_hat = net.batch_heads(batch.x)
    n = len(batch)
    return float((np.sum((batch.k - k_hat) ** 2)
                  + np.sum((batch.K.reshape(n, 14) - K_hat) ** 2)
                  + np.sum((batch.x_hat - x_hat) ** 2)) / n)


def _torque_grads(net: TorqueNet, batch: DistillationDataset):
    xn = net.norm.apply(batch.x)
    pred, cache = mlp_forward(net.mlp, xn)
    diff = pred - batch.g
    loss = float(np.sum(diff ** 2) / len(batch))
    gw, gb = mlp_backward(net.mlp, cache, 2.0 * diff / len(batch))
    return loss, gw + gb


def _feedback_grads(net: FeedbackNet, batch: DistillationDataset):
    n = len(batch)
    xn = net.norm.apply(batch.x)
    # trunk with ELU on every layer feeding the three linear heads
    from .mlp import elu
    h = xn
    pre = []
    posts = [h]
    for w, b in zip(net.trunk.weights, net.trunk.biases):
        z = h @ w + b
        pre.append(z)
        h = elu(z)
        posts.append(h)

    loss = 0.0
    g_h = np.zeros_like(h)
    head_grads = []
    for head, target in ((net.head_k, batch.k),
                         (net.head_K, batch.K.reshape(n, 14)),
                         (net.head_x, batch.x_hat)):
        pred, cache = mlp_forward(head, h)
        diff = pred - target
        loss += float(np.sum(diff ** 2) / n)
        g_out = 2.0 * diff / n
        gw, gb = mlp_backward(head, cache, g_out)
        head_grads.append((gw, gb))
        g_h += g_out @ head.weights[0].T

    # backprop through the all-ELU trunk
    tw = [None] * len(net.trunk.weights)
    tb = [None] * len(net.trunk.weights)
    g = g_h
    for i in range(len(net.trunk.weights) - 1, -1, -1):
        g = g * elu_grad(pre[i])
        tw[i] = posts[i].T @ g
        tb[i] = g.sum(axis=0)
        if i > 0:
            g = g @ net.trunk.weights[i].T

    grads = tw + tb
    for gw, gb in head_grads:
        grads.extend(gw)
        grads.extend(gb)
    return loss, grads


def _ordered_arrays(net) -> list[np.ndarray]:
    if net.kind == "torque":
        return net.mlp.weights + net.mlp.biases
    out = net.trunk.weights + net.trunk.biases
    for head in (net.head_k, net.head_K, net.head_x):
        out.extend(head.weights)
        out.extend(head.biases)
    return out


def loss_gradients(net, batch: DistillationDataset):
    """(loss, grads) with grads ordered like ``_ordered_arrays``."""
    if net.kind == "torque":
        return _torque_grads(net, batch)
    return _feedback_grads(net, batch)


def train_step(net, batch: DistillationDataset, adam: AdamState,
               lr: float, config: TrainConfig) -> float:
    """One Adam update; returns the pre-update batch loss."""
    loss, grads = loss_gradients(net, batch)
    if not np.isfinite(loss):
        raise TrainingDivergedError(
            f"non-finite loss on batch (first episode "
            f"{int(batch.episode[0])}, t {int(batch.t[0])})")
    adam_update(_ordered_arrays(net), grads, adam, lr,
                beta1=config.adam_beta1, beta2=config.adam_beta2,
                eps=config.adam_eps)
    return loss


def train(dataset: DistillationDataset, kind: str,
          config: TrainConfig | None = None, normalize: bool = True,
          ) -> tuple[TorqueNet | FeedbackNet, np.ndarray]:
    """Train a fresh network of the given kind on the dataset.

    Batches are drawn uniformly with replacement; fully deterministic for
    a fixed config seed.  Returns the trained net and per-batch losses.
    """
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed)
    from .policy_nets import Normalizer
    norm = Normalizer.fit(dataset.x) if normalize else None
    if kind == "torque":
        net = TorqueNet.create(rng, norm)
        lr = config.lr_torque
    elif kind == "feedback":
        net = FeedbackNet.create(rng, norm)
        lr = config.lr_feedback
    else:
        raise ValueError(f"unknown network kind {kind!r}")
    adam = AdamState.for_params(_ordered_arrays(net))
    losses = np.empty(config.n_batches)
    n = len(dataset)
    for i in range(config.n_batches):
        idx = rng.integers(0, n, size=min(config.batch_size, n))
        losses[i] = train_step(net, dataset.subset(idx), adam, lr, config)
    return net, losses
