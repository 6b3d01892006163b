"""Reference method: pure self-localization plus a separate distributed tracker.

The baseline never exchanges probabilistic information between the two tasks:
self-localization runs the same message-passing engine with every target edge
removed, and the tracker is a distributed particle filter whose per-sensor
log-likelihoods use the self-localization point estimates (posterior means)
instead of message kernels.  Both tasks share all numerical subroutines with
the joint method, so performance differences isolate the information
transfer.
"""

from __future__ import annotations

import logging

import numpy as np

from .consensusnet import ConsensusConfig
from .lconsensus import (
    BasisSpec,
    FitError,
    _systematic_indices,
    fit_log_values,
    reconstruct_weights,
    sum_coefficients,
)
from .msgpass import TARGET_ID, CoslatEngine, NetState
from .particles import DegenerateWeightsError, ParticleSet
from .scenario import TopologySnapshot
from .statespace import GaussianRangeNoise

log = logging.getLogger(__name__)


def strip_target(topo: TopologySnapshot) -> TopologySnapshot:
    """Topology with every sensor-target measurement link removed."""
    meas = {k: tuple(l for l in links if l != TARGET_ID)
            for k, links in topo.meas.items()}
    return TopologySnapshot(topo.comm, meas, frozenset())


def csl_step(engine: CoslatEngine, state: NetState, topo: TopologySnapshot,
             measurements: dict, n: int) -> NetState:
    """One pure self-localization step: the joint engine minus target edges."""
    return engine.step(state, strip_target(topo), measurements, n)


def dtt_step(target_preds: dict, sensor_locations: dict, measurements: dict,
             topo: TopologySnapshot, basis: BasisSpec, consensus: ConsensusConfig | None,
             noise: GaussianRangeNoise, rng: np.random.Generator,
             events: dict | None = None, rejuvenate: bool = True,
             location_jitter_cap: float = 0.35,
             velocity_jitter_floor: float = 0.02) -> dict:
    """One distributed-particle-filter update of the target belief.

    Each observing sensor fits its local log range likelihood, evaluated with
    its own location point estimate, in the shared basis; the coefficient sum
    is obtained by consensus and every sensor reweights and resamples its
    local copy of the target prediction particles.
    """
    nsensors = len(target_preds)
    observers = {}
    coeffs = {}
    for k, pred in target_preds.items():
        if k in topo.observers:
            y = measurements[(k, TARGET_ID)]
            x_hat = np.asarray(sensor_locations[k], dtype=float)
            dists = np.linalg.norm(pred.locations - x_hat, axis=1)
            loglik = -((y - dists) ** 2) / (2.0 * noise.sigma_v2)
            try:
                beta, _ = fit_log_values(pred.locations, loglik, basis)
                observers[k] = True
            except FitError:
                log.warning("sensor %s: tracker likelihood fit failed; dropped", k)
                if events is not None:
                    events["fit_failures"] = events.get("fit_failures", 0) + 1
                beta = np.zeros(basis.size)
        else:
            beta = np.zeros(basis.size)
        coeffs[k] = beta
    if not observers:
        return dict(target_preds)
    summed = sum_coefficients(coeffs, topo.comm, consensus, nsensors)
    offset = rng.random()
    resampled = {}
    for k, pred in target_preds.items():
        try:
            weighted = reconstruct_weights(summed[k], pred, basis)
        except DegenerateWeightsError:
            log.warning("sensor %s: degenerate tracker update, keeping prediction", k)
            if events is not None:
                events["degenerate_target_updates"] = (
                    events.get("degenerate_target_updates", 0) + 1)
            resampled[k] = pred
            continue
        idx = _systematic_indices(weighted.weights, pred.size, offset)
        resampled[k] = ParticleSet.equal_weights(weighted.states[idx])
    if not rejuvenate:
        return resampled
    # Same regularized-resampling jitter as the joint method; a shared noise
    # draw keeps identical local copies identical.
    sizes = max(p.size for p in resampled.values())
    noise_matrix = rng.normal(0.0, 1.0, (sizes, 4))
    beliefs = {}
    cache = {}
    for k, pset in resampled.items():
        key = id(pset)
        if key not in cache:
            scale = pset.states.std(axis=0) * pset.size ** (-1.0 / 6.0)
            scale[:2] = np.minimum(scale[:2], location_jitter_cap)
            if pset.states.shape[1] > 2:
                scale[2:] = np.maximum(scale[2:], velocity_jitter_floor)
            if scale.any():
                cache[key] = ParticleSet(pset.states + noise_matrix[: pset.size] * scale,
                                         pset.weights)
            else:
                cache[key] = pset
        beliefs[k] = cache[key]
    return beliefs
