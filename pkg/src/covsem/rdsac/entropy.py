"""Kozachenko-Leonenko nearest-neighbour entropy of action particles."""

from __future__ import annotations

import numpy as np
from scipy.special import digamma, gammaln

from covsem.neural import Tensor

# Returned when a particle set has a zero nearest-neighbour distance.
ENTROPY_FLOOR = -30.0
# Distance floor inside the differentiable estimator, keeps log r finite.
DIST_FLOOR = 1e-6


def _log_unit_ball(d: int) -> float:
    return 0.5 * d * np.log(np.pi) - gammaln(0.5 * d + 1.0)


def _constant(n: int, d: int) -> float:
    return float(digamma(n) - digamma(1) + _log_unit_ball(d))


def _nn_index(x: np.ndarray) -> np.ndarray:
    """Index of each row's nearest other row, per leading batch entry. x: (S, P, d)."""
    d2 = np.sum((x[:, :, None, :] - x[:, None, :, :]) ** 2, axis=-1)
    p = x.shape[1]
    d2[:, np.arange(p), np.arange(p)] = np.inf
    return np.argmin(d2, axis=-1)


def entropy_estimate(samples: np.ndarray) -> float:
    """k=1 estimate (nats) for an (n, d) sample; ``ENTROPY_FLOOR`` if any point is duplicated."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least two samples")
    nn = _nn_index(x[None])[0]
    r = np.linalg.norm(x - x[nn], axis=1)
    if np.any(r <= 0.0):
        return ENTROPY_FLOOR
    return max(_constant(n, d) + d * float(np.mean(np.log(r))), ENTROPY_FLOOR)


def entropy_tensor(particles: Tensor) -> Tensor:
    """Differentiable mean over states of the particle entropy. particles: (S, P, d)."""
    s, p, d = particles.shape
    if p < 2:
        raise ValueError("need at least two particles per state")
    nn = _nn_index(particles.data)
    flat = particles.reshape(s * p, d)
    partner = flat[(np.arange(s)[:, None] * p + nn).ravel()]
    diff = flat - partner
    r2 = (diff * diff).sum(axis=-1) + DIST_FLOOR ** 2
    log_r = r2.log() * 0.5
    return log_r.mean() * d + _constant(p, d)
