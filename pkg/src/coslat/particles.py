"""Weighted particle sets, Gaussian kernel messages, and particle operations.

Particle sets are immutable after construction: every operation returns a new
set.  All randomness flows through explicit numpy generators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import LOG_FLOOR, log_kde_batch

WEIGHT_TOL = 1e-9


class DegenerateWeightsError(Exception):
    """All particle weights vanished; the update carries no information."""


def _normalize(weights: np.ndarray) -> np.ndarray:
    total = weights.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateWeightsError("weight vector sums to zero")
    return weights / total


@dataclass(frozen=True)
class ParticleSet:
    """J weighted samples over a 2D location or 4D kinematic state."""

    states: np.ndarray  # (J, d)
    weights: np.ndarray  # (J,), nonnegative, summing to one

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if states.ndim != 2 or states.shape[0] < 1:
            raise ValueError("states must be a (J, d) array with J >= 1")
        if weights.shape != (states.shape[0],):
            raise ValueError("weights must be a (J,) vector")
        if not np.isfinite(states).all():
            raise ValueError("particle states must be finite")
        if not np.isfinite(weights).all() or (weights < 0).any():
            raise ValueError("weights must be finite and nonnegative")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            weights = _normalize(weights)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def equal_weights(cls, states: np.ndarray) -> "ParticleSet":
        states = np.asarray(states, dtype=float)
        j = states.shape[0]
        return cls(states, np.full(j, 1.0 / j))

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def locations(self) -> np.ndarray:
        return self.states[:, :2]


@dataclass(frozen=True)
class KernelMessage:
    """Gaussian kernel mixture over 2D location (closed-form evaluable)."""

    centers: np.ndarray  # (J, 2)
    weights: np.ndarray  # (J,)
    sigma_K2: float

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if centers.ndim != 2 or centers.shape[1] != 2:
            raise ValueError("kernel centers must be a (J, 2) array")
        if not np.isfinite(centers).all():
            raise ValueError("kernel centers must be finite")
        if self.sigma_K2 <= 0:
            raise ValueError("sigma_K2 must be positive")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            weights = _normalize(weights)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "weights", weights)


def kde_evaluate(msg: KernelMessage, query: np.ndarray):
    """Evaluate the kernel mixture at one query point or an (N, 2) batch."""
    query = np.asarray(query, dtype=float)
    single = query.ndim == 1
    pts = query.reshape(1, 2) if single else query
    diff = pts[:, None, :] - msg.centers[None, :, :]
    d2 = np.einsum("njk,njk->nj", diff, diff)
    vals = np.exp(-d2 / (2.0 * msg.sigma_K2)) @ msg.weights / (2.0 * np.pi * msg.sigma_K2)
    return float(vals[0]) if single else vals


def kde_log_many(msg: KernelMessage, points: np.ndarray) -> np.ndarray:
    """Log-density of the mixture at (N, 2) points; floored at LOG_FLOOR."""
    return log_kde_batch(points, msg.centers, msg.weights, msg.sigma_K2)


def resample(p: ParticleSet, j_out: int, rng: np.random.Generator) -> ParticleSet:
    """Systematic resampling to j_out equally weighted particles."""
    idx = resample_indices(p.weights, j_out, rng)
    return ParticleSet(p.states[idx], np.full(j_out, 1.0 / j_out))


def resample_indices(weights: np.ndarray, j_out: int, rng: np.random.Generator) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateWeightsError("cannot resample from all-zero weights")
    positions = (rng.random() + np.arange(j_out)) / j_out
    cumulative = np.cumsum(weights / total)
    cumulative[-1] = 1.0  # guard against round-off
    return np.searchsorted(cumulative, positions, side="right")


def importance_weight(p: ParticleSet, f) -> ParticleSet:
    """Reweight by a nonnegative function: w' propto w * f(state)."""
    vals = np.asarray(f(p.states), dtype=float)
    if vals.shape != (p.size,):
        raise ValueError("importance function must return one value per particle")
    if (vals < 0).any():
        raise ValueError("importance function must be nonnegative")
    new = p.weights * vals
    return ParticleSet(p.states, _normalize(new))


def moments(p: ParticleSet) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean and weighted covariance of the particle set."""
    mean = p.weights @ p.states
    centered = p.states - mean
    cov = (centered * p.weights[:, None]).T @ centered
    return mean, cov


def effective_sample_size(weights: np.ndarray) -> float:
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0:
        return 0.0
    w = weights / total
    return 1.0 / float(w @ w)


def location_variance_sum(p: ParticleSet) -> float:
    """Sum of the location-coordinate variances (movement-gate statistic)."""
    _, cov = moments(p)
    return float(cov[0, 0] + cov[1, 1])
