"""Gaussian mixture prior over pooled state-action transitions."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


def floor_eigenvalues(cov: np.ndarray, floor: float) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    w, v = np.linalg.eigh(cov)
    if w.min() >= floor:
        return cov
    return (v * np.maximum(w, floor)) @ v.T


def _log_gaussians(x: np.ndarray, means: np.ndarray,
                   covs: np.ndarray) -> np.ndarray:
    """Log density of each row of x under each mixture component, (N, K)."""
    n, d = x.shape
    k = means.shape[0]
    out = np.empty((n, k))
    const = -0.5 * d * np.log(2.0 * np.pi)
    for i in range(k):
        chol = np.linalg.cholesky(covs[i])
        z = np.linalg.solve(chol, (x - means[i]).T)
        out[:, i] = const - np.log(np.diag(chol)).sum() - 0.5 * (z * z).sum(axis=0)
    return out


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))).squeeze(axis)


@dataclass
class GmmPrior:
    """EM-fitted mixture used as a transition prior.

    ``pseudo_count`` is the strength n0 with which the mixture moments are
    blended into per-timestep empirical moments.
    """

    weights: np.ndarray            # (k,)
    means: np.ndarray              # (k, d)
    covariances: np.ndarray        # (k, d, d)
    pseudo_count: float = 1.0
    log_likelihoods: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    def responsibilities(self, x: np.ndarray) -> np.ndarray:
        """Posterior component probabilities for a single point."""
        lp = _log_gaussians(x[None, :], self.means, self.covariances)[0]
        lp = lp + np.log(self.weights)
        lp -= _logsumexp(lp, axis=0)
        return np.exp(lp)

    def moments_at(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Responsibility-weighted mixture mean and covariance at point x."""
        w = self.responsibilities(x)
        mu = w @ self.means
        diff = self.means - mu
        phi = np.einsum("k,kij->ij", w, self.covariances)
        phi += (self.means.T * w) @ self.means - np.outer(mu, mu)
        return mu, 0.5 * (phi + phi.T)


def fit_gmm(samples: np.ndarray, k: int, max_iters: int = 50,
            tol: float = 1e-5, seed: int = 0,
            covariance_floor: float = 1e-6,
            pseudo_count: float = 1.0) -> GmmPrior:
    """EM fit of a k-component mixture to transition samples (N, d).

    Components emptied during the M-step are re-seeded from a random
    sample.  The log-likelihood trace is kept on the returned prior; EM
    stops when its relative improvement drops below ``tol``.
    """
    samples = np.asarray(samples, dtype=float)
    n, d = samples.shape
    if n < k:
        raise ValueError(f"need at least k={k} samples, got {n}")
    rng = np.random.default_rng(seed)

    # initialize at k distinct random samples with the pooled covariance
    weights = np.full(k, 1.0 / k)
    idx = rng.choice(n, size=k, replace=False)
    means = samples[idx].copy()
    global_cov = floor_eigenvalues(np.cov(samples.T, bias=True).reshape(d, d),
                                   max(covariance_floor, 1e-6))
    covs = np.tile(global_cov, (k, 1, 1))

    lls: list[float] = []
    for it in range(max_iters):
        lp = _log_gaussians(samples, means, covs) + np.log(weights)
        ll = float(_logsumexp(lp, axis=1).sum())
        if lls and ll < lls[-1]:
            # numerical wobble from covariance flooring; keep previous fit
            break
        lls.append(ll)
        if len(lls) > 1 and abs(lls[-1] - lls[-2]) < tol * abs(lls[-2]):
            break

        logw = lp - _logsumexp(lp, axis=1)[:, None]
        w = np.exp(logw)                      # (n, k) responsibilities
        mass = w.sum(axis=0)
        empty = mass < 1e-8 * n
        if np.any(empty):
            for i in np.where(empty)[0]:
                j = rng.integers(0, n)
                w[:, i] = 0.0
                w[j, i] = 1.0
                log.debug("reinitialized empty GMM component %d", i)
            mass = w.sum(axis=0)
        weights = mass / mass.sum()
        means = (w.T @ samples) / mass[:, None]
        for i in range(k):
            diff = samples - means[i]
            cov = (diff.T * w[:, i]) @ diff / mass[i]
            covs[i] = floor_eigenvalues(cov, covariance_floor)

    return GmmPrior(weights=weights, means=means, covariances=covs,
                    pseudo_count=pseudo_count, log_likelihoods=lls)
