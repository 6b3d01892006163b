"""State vectors, motion model, range measurements, and priors.

States are 4-vectors [x1, x2, v1, v2]: planar location plus velocity, one
unit time step per discrete step.  Anchors are static sensors with perfectly
known locations (Dirac priors); mobile sensors carry a diffuse location prior
and a Gaussian velocity prior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Constant-velocity discretization with unit time step.
CV_TRANSITION = np.array(
    [
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)
CV_NOISE_INPUT = np.array(
    [
        [0.5, 0.0],
        [0.0, 0.5],
        [1.0, 0.0],
        [0.0, 1.0],
    ]
)


@dataclass(frozen=True)
class MotionModel:
    """Linear motion model x' = G x + W u with driving noise u ~ N(0, sigma_u2 I)."""

    G: np.ndarray = field(default_factory=lambda: CV_TRANSITION.copy())
    W: np.ndarray = field(default_factory=lambda: CV_NOISE_INPUT.copy())
    sigma_u2: float = 0.0005

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        W = np.asarray(self.W, dtype=float)
        if G.shape != (4, 4) or W.shape != (4, 2):
            raise ValueError("motion model expects G (4,4) and W (4,2)")
        if not (np.isfinite(G).all() and np.isfinite(W).all()):
            raise ValueError("motion model matrices must be finite")
        if self.sigma_u2 < 0:
            raise ValueError("sigma_u2 must be nonnegative")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "W", W)

    def sample_noise(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.normal(0.0, np.sqrt(self.sigma_u2), size=(size, 2))


def propagate(state: np.ndarray, model: MotionModel, u: np.ndarray) -> np.ndarray:
    """One motion-model step: G @ state + W @ u."""
    return model.G @ np.asarray(state, dtype=float) + model.W @ np.asarray(u, dtype=float)


def propagate_many(states: np.ndarray, model: MotionModel, us: np.ndarray) -> np.ndarray:
    """Vectorized propagate over a (J, 4) state array with (J, 2) noise."""
    return states @ model.G.T + us @ model.W.T


class GaussianRangeNoise:
    """Zero-mean Gaussian range noise with known variance sigma_v2."""

    def __init__(self, sigma_v2: float = 2.0):
        if sigma_v2 <= 0:
            raise ValueError("sigma_v2 must be positive")
        self.sigma_v2 = float(sigma_v2)
        self._norm = 1.0 / np.sqrt(2.0 * np.pi * self.sigma_v2)

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._norm * np.exp(-(x * x) / (2.0 * self.sigma_v2))

    def sample(self, rng: np.random.Generator, size=None):
        return rng.normal(0.0, np.sqrt(self.sigma_v2), size=size)


def location(state: np.ndarray) -> np.ndarray:
    """Location part of a state (works for 2- and 4-vectors)."""
    return np.asarray(state, dtype=float)[:2]


def range_measurement(a: np.ndarray, b: np.ndarray, v: float = 0.0) -> float:
    """Noisy distance between the locations of two nodes: ||a - b|| + v."""
    d = float(np.linalg.norm(location(a) - location(b)))
    return d + float(v)


def range_likelihood(y: float, a: np.ndarray, b: np.ndarray, noise: GaussianRangeNoise):
    """Density of measuring range y between locations a and b."""
    d = np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), axis=-1)
    return noise.density(y - d)


class DiracPrior:
    """Exactly known state (anchors)."""

    is_dirac = True
    diffuse_box = None

    def __init__(self, state: np.ndarray):
        self.state = np.asarray(state, dtype=float).reshape(4)
        if not np.isfinite(self.state).all():
            raise ValueError("Dirac prior state must be finite")

    def mean(self) -> np.ndarray:
        return self.state.copy()

    def sample(self, nsamples: int, rng: np.random.Generator) -> np.ndarray:
        return np.tile(self.state, (nsamples, 1))


class BoxVelocityPrior:
    """Uniform location prior on a box, independent Gaussian velocity prior."""

    is_dirac = False

    def __init__(self, box, vel_mean, vel_cov):
        self.box = np.asarray(box, dtype=float).reshape(2, 2)  # [[x1lo, x1hi], [x2lo, x2hi]]
        if np.any(self.box[:, 1] <= self.box[:, 0]):
            raise ValueError("box bounds must satisfy lo < hi")
        self.vel_mean = np.asarray(vel_mean, dtype=float).reshape(2)
        self.vel_cov = np.asarray(vel_cov, dtype=float).reshape(2, 2)
        _check_psd(self.vel_cov)

    @property
    def diffuse_box(self) -> np.ndarray:
        return self.box.copy()

    def mean(self) -> np.ndarray:
        loc = self.box.mean(axis=1)
        return np.concatenate([loc, self.vel_mean])

    def sample(self, nsamples: int, rng: np.random.Generator) -> np.ndarray:
        loc = rng.uniform(self.box[:, 0], self.box[:, 1], size=(nsamples, 2))
        vel = rng.multivariate_normal(self.vel_mean, self.vel_cov, size=nsamples)
        return np.hstack([loc, vel])


class GaussianPrior:
    """Gaussian prior over the full 4D state."""

    is_dirac = False
    diffuse_box = None

    def __init__(self, mean, cov):
        self._mean = np.asarray(mean, dtype=float).reshape(4)
        self.cov = np.asarray(cov, dtype=float).reshape(4, 4)
        _check_psd(self.cov)

    def mean(self) -> np.ndarray:
        return self._mean.copy()

    def sample(self, nsamples: int, rng: np.random.Generator) -> np.ndarray:
        return rng.multivariate_normal(self._mean, self.cov, size=nsamples)


def _check_psd(cov: np.ndarray):
    if not np.allclose(cov, cov.T):
        raise ValueError("covariance must be symmetric")
    eigvals = np.linalg.eigvalsh(cov)
    if eigvals.min() < -1e-12:
        raise ValueError("covariance must be positive semidefinite")
