"""Likelihood consensus: distributed computation of the target message product.

Each sensor observing the target fits the log of its kernel message to the
target with a fixed tensor-product polynomial basis (degree 3 per coordinate,
16 terms), all sensors consensus-sum the coefficient vectors, and every sensor
reconstructs importance weights for its local copy of the target prediction
particles.  Sensors without a target measurement contribute zero coefficient
vectors, which leaves the consensus sum unchanged.

Raw cubic monomials of field coordinates condition the normal equations
badly, so fits run in an affine frame (shared center and scale) that every
sensor derives from globally known quantities; the represented function space
is unchanged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .consensusnet import CommGraph, ConsensusConfig, exact_average, run_consensus
from .particles import (
    DegenerateWeightsError,
    KernelMessage,
    ParticleSet,
    kde_log_many,
    resample,
)

log = logging.getLogger(__name__)

LOG_VALUE_SPAN = 30.0  # soft floor: clip fit targets this far below the peak


class FitError(Exception):
    """Least-squares fit of a log message failed (rank deficient or empty)."""


@dataclass(frozen=True)
class BasisSpec:
    """Tensor-product monomials x1^i x2^j with i, j in {0..degree}.

    `center` and `scale` define the affine evaluation frame; the default is
    the identity frame (raw coordinates).
    """

    degree: int = 3
    center: tuple = (0.0, 0.0)
    scale: float = 1.0

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def exponents(self) -> tuple:
        return tuple((i, j) for i in range(self.degree + 1) for j in range(self.degree + 1))

    @property
    def size(self) -> int:
        return (self.degree + 1) ** 2

    def framed(self, center, scale: float) -> "BasisSpec":
        return BasisSpec(self.degree, (float(center[0]), float(center[1])), float(scale))


def monomials(x: np.ndarray, basis: BasisSpec) -> np.ndarray:
    """Basis functions at one 2D location or an (N, 2) batch, in fixed order."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x.reshape(1, 2) if single else x
    z = (pts - np.asarray(basis.center)) / basis.scale
    p1 = z[:, 0][:, None] ** np.arange(basis.degree + 1)[None, :]
    p2 = z[:, 1][:, None] ** np.arange(basis.degree + 1)[None, :]
    out = np.einsum("ni,nj->nij", p1, p2).reshape(len(pts), basis.size)
    return out[0] if single else out


def fit_log_values(points: np.ndarray, log_values: np.ndarray, basis: BasisSpec,
                   ridge_scale: float = 1e-9) -> tuple[np.ndarray, float]:
    """Least-squares coefficients for log_values ~ beta . phi(points).

    Solves the normal equations with a ridge term lambda = ridge_scale *
    trace(Phi'Phi)/R.  Returns (beta, residual RMS).
    """
    points = np.asarray(points, dtype=float)
    log_values = np.asarray(log_values, dtype=float)
    if len(points) < basis.size:
        raise FitError(f"need at least {basis.size} fit points, got {len(points)}")
    phi = monomials(points, basis)
    normal = phi.T @ phi
    lam = ridge_scale * np.trace(normal) / basis.size
    normal[np.diag_indices_from(normal)] += lam
    try:
        beta = np.linalg.solve(normal, phi.T @ log_values)
    except np.linalg.LinAlgError as exc:
        raise FitError("normal equations are singular even with ridge") from exc
    if not np.isfinite(beta).all():
        raise FitError("fit produced non-finite coefficients")
    residual = log_values - phi @ beta
    return beta, float(np.sqrt(np.mean(residual**2)))


def fit_log_message(msg: KernelMessage, refpoints: ParticleSet, basis: BasisSpec,
                    ridge_scale: float = 1e-9) -> tuple[np.ndarray, float]:
    """Fit the log kernel message at the reference particle locations.

    Density values are floored before taking logs; floored points are dropped
    when they are a small minority, otherwise the log values are clipped to a
    fixed span below the peak so a handful of zero-density points cannot
    dominate the fit.
    """
    points = refpoints.locations
    logv = kde_log_many(msg, points)
    floored = logv <= np.log(1e-300)
    n_floor = int(floored.sum())
    if n_floor and n_floor < 0.1 * len(points):
        points = points[~floored]
        logv = logv[~floored]
        if len(points) < basis.size:
            raise FitError("too few unfloored fit points")
    elif n_floor:
        logv = np.maximum(logv, logv.max() - LOG_VALUE_SPAN)
    return fit_log_values(points, logv, basis, ridge_scale)


def reconstruct_weights(coeffs: np.ndarray, particles: ParticleSet,
                        basis: BasisSpec) -> ParticleSet:
    """Importance-weight particles by the reconstructed message product.

    Weights are proportional to exp(B . phi(location)); the maximum exponent
    is subtracted before exponentiating for overflow safety.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if not np.isfinite(coeffs).all():
        raise ValueError("coefficient vector must be finite")
    exponents = monomials(particles.locations, basis) @ coeffs
    exponents -= exponents.max()
    weights = particles.weights * np.exp(exponents)
    total = weights.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateWeightsError("reconstructed weights underflowed")
    return ParticleSet(particles.states, weights / total)


def sum_coefficients(per_sensor: dict, graph: CommGraph, cfg: ConsensusConfig | None,
                     n_sensors: int) -> dict:
    """Consensus estimate of the coefficient sum at every sensor.

    Runs R parallel average-consensus instances (one vector consensus) and
    rescales by the known network size; cfg=None means exact consensus.
    """
    averaged = exact_average(per_sensor) if cfg is None else run_consensus(graph, per_sensor, cfg)
    return {k: n_sensors * v for k, v in averaged.items()}


def lc_target_belief(messages: dict, target_preds: dict, graph: CommGraph,
                     basis: BasisSpec, consensus: ConsensusConfig | None,
                     rng: np.random.Generator, events: dict | None = None) -> dict:
    """Per-sensor target beliefs via likelihood consensus.

    `messages` maps observing sensor id -> its kernel message to the target
    (absent for sensors without a target measurement); `target_preds` maps
    every sensor id -> its local copy of the target prediction particles.
    Sensors reuse a shared resampling draw so that, under exact consensus and
    identical predictions, all local beliefs coincide exactly.
    """
    nsensors = len(target_preds)
    coeffs = {}
    for k, pred in target_preds.items():
        if k in messages:
            try:
                beta, _ = fit_log_message(messages[k], pred, basis)
            except FitError:
                log.warning("sensor %s: log-message fit failed; dropped from target update", k)
                if events is not None:
                    events["fit_failures"] = events.get("fit_failures", 0) + 1
                beta = np.zeros(basis.size)
        else:
            beta = np.zeros(basis.size)
        coeffs[k] = beta
    if not messages:
        return dict(target_preds)
    summed = sum_coefficients(coeffs, graph, consensus, nsensors)
    offset = rng.random()  # shared systematic-resampling offset
    beliefs = {}
    for k, pred in target_preds.items():
        try:
            weighted = reconstruct_weights(summed[k], pred, basis)
        except DegenerateWeightsError:
            log.warning("sensor %s: degenerate target reconstruction, keeping prediction", k)
            if events is not None:
                events["degenerate_target_updates"] = (
                    events.get("degenerate_target_updates", 0) + 1)
            beliefs[k] = pred
            continue
        idx = _systematic_indices(weighted.weights, pred.size, offset)
        beliefs[k] = ParticleSet.equal_weights(weighted.states[idx])
    return beliefs


def _systematic_indices(weights: np.ndarray, j_out: int, offset: float) -> np.ndarray:
    positions = (offset + np.arange(j_out)) / j_out
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side="right")
