"""Per-step belief propagation for joint self-localization and tracking.

Each time step runs P message-passing iterations.  Prediction messages are
computed once per step and reused across iterations; iteration-p beliefs
reweight the prediction particles by the product of the iteration-p
measurement-message kernels and resample.  Measurement messages are sampled
as rings around the sender's belief particles (radius = measured range minus
a noise draw, angle uniform).

Two practical provisions keep the filter alive where the plain scheme cannot
work at the configured particle count:

* Bootstrap sampling.  When the product of message kernels vanishes on
  (nearly) every prediction particle -- unavoidable when the prediction is a
  diffuse prior cloud over a huge area -- the belief is sampled from the
  mixture of the incoming messages instead and importance-corrected against
  the prediction density.
* Message censoring.  A sensor whose own belief is still effectively
  uninformative (location-variance sum above a large threshold) withholds its
  measurement messages; a kernel estimate of a near-uniform cloud evaluates
  to zero almost everywhere and would zero out the receiver's product.

The target belief is computed per sensor.  In `distributed-lc` mode each
sensor fits its target-message logarithm in the shared polynomial basis and
the coefficient vectors are consensus-summed; `centralized` mode multiplies
the message kernels directly; `exact-extrinsic` mode additionally replaces
the sender densities on target edges by the extrinsic products (everything
except the receiver's own message) instead of the full beliefs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ._accel import LOG_FLOOR, log_range_batch
from .consensusnet import CommGraph, ConsensusConfig
from .lconsensus import BasisSpec, lc_target_belief
from .particles import (
    DegenerateWeightsError,
    KernelMessage,
    ParticleSet,
    effective_sample_size,
    kde_log_many,
    location_variance_sum,
    resample,
    resample_indices,
)
from .statespace import GaussianRangeNoise, MotionModel, propagate_many

log = logging.getLogger(__name__)

TARGET_ID = 0
BOX_MARGIN = 100.0  # slack around a diffuse prior box when evaluating its density

MODES = ("distributed-lc", "centralized", "exact-extrinsic")


@dataclass(frozen=True)
class Belief:
    """Approximate marginal posterior of one node at one iteration."""

    owner: int
    iteration: int
    particles: ParticleSet
    diffuse_box: np.ndarray | None = None  # set while the belief is still a prior box


@dataclass(frozen=True)
class PredictionMessage:
    """Previous belief propagated through the motion model (fixed within a step)."""

    owner: int
    particles: ParticleSet
    diffuse_box: np.ndarray | None = None


@dataclass(frozen=True)
class MeasurementMessage:
    """Range evidence from one node to another, over the receiver's 2D location.

    Carries both representations: ring-sampled particles with an attached
    Gaussian kernel mixture (closed-form evaluable, used by the consensus
    fit), and the measurement plus sender locations, from which the message
    integral can be evaluated exactly as a mixture of range likelihoods.
    """

    sender: int
    receiver: int
    particles: ParticleSet
    kernel: KernelMessage
    y: float = float("nan")
    sender_locations: np.ndarray | None = None
    sender_weights: np.ndarray | None = None
    sigma_v2: float = float("nan")


def prediction_message(prev: ParticleSet, model: MotionModel, rng: np.random.Generator,
                       owner: int = -1, dirac: bool = False,
                       diffuse_box: np.ndarray | None = None) -> PredictionMessage:
    """Propagate belief particles one step; Dirac nodes pass through unchanged."""
    if dirac:
        return PredictionMessage(owner, prev, None)
    us = model.sample_noise(rng, prev.size)
    states = propagate_many(prev.states, model, us)
    return PredictionMessage(owner, ParticleSet.equal_weights(states), diffuse_box)


def ring_points(sender_locs: np.ndarray, y: float, noise: GaussianRangeNoise,
                rng: np.random.Generator, max_retries: int = 50) -> np.ndarray:
    """Sample one ring point per sender location: radius y - v, uniform angle."""
    j = len(sender_locs)
    theta = rng.uniform(0.0, 2.0 * np.pi, j)
    radius = y - noise.sample(rng, j)
    bad = radius < 0.0
    retries = 0
    while bad.any() and retries < max_retries:
        radius[bad] = y - noise.sample(rng, int(bad.sum()))
        bad = radius < 0.0
        retries += 1
    np.maximum(radius, 0.0, out=radius)
    return sender_locs + radius[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])


def measurement_message(y: float, sender: ParticleSet, noise: GaussianRangeNoise,
                        sigma_K2: float, rng: np.random.Generator,
                        sender_id: int = -1, receiver_id: int = -1) -> MeasurementMessage:
    """Particle and kernel representation of the range message from a sender belief."""
    pts = ring_points(sender.locations, y, noise, rng)
    particles = ParticleSet.equal_weights(pts)
    kernel = KernelMessage(pts, particles.weights, sigma_K2)
    locs, weights = sender.locations.copy(), sender.weights.copy()
    if np.ptp(locs, axis=0).max() == 0.0:  # Dirac sender: one row carries it all
        locs, weights = locs[:1], np.array([1.0])
    return MeasurementMessage(sender_id, receiver_id, particles, kernel, float(y),
                              locs, weights, noise.sigma_v2)


def message_log_terms(msg: MeasurementMessage, pts: np.ndarray):
    """(log message value, log ring-sample density) at each point, closed form.

    The message value is the range-likelihood mixture over the sender belief
    particles, widened by the kernel variance: that is the expectation of the
    ring-sample kernel estimate, so the kernel smoothing that the bandwidth
    recommendation builds in is kept while its angular Monte Carlo noise
    (which erodes ring-shaped beliefs over time) is removed.
    """
    return log_range_batch(pts, msg.sender_locations, msg.sender_weights,
                           msg.y, msg.sigma_v2)


def product_log_weights(locations: np.ndarray, kernels: list) -> np.ndarray:
    """Sum of log kernel densities at each location (zeros floored)."""
    logw = np.zeros(len(locations))
    for kernel in kernels:
        logw += kde_log_many(kernel, locations)
    return logw


def _is_all_floored(logw: np.ndarray, n_kernels: int) -> bool:
    return bool(logw.max() <= n_kernels * LOG_FLOOR + 1.0)


def belief_update(pred: PredictionMessage | ParticleSet, kernels: list,
                  rng: np.random.Generator, j_out: int | None = None) -> ParticleSet:
    """Reweight prediction particles by the message product and resample.

    Raises DegenerateWeightsError when every particle gets zero weight.  An
    empty kernel list returns the prediction particles unchanged.
    """
    particles = pred.particles if isinstance(pred, PredictionMessage) else pred
    if not kernels:
        return particles
    j_out = j_out or particles.size
    logw = product_log_weights(particles.locations, kernels)
    if _is_all_floored(logw, len(kernels)):
        raise DegenerateWeightsError("message product vanished on all prediction particles")
    weights = np.exp(logw - logw.max()) * particles.weights
    idx = resample_indices(weights, j_out, rng)
    return ParticleSet.equal_weights(particles.states[idx])


def _box_log_density(box: np.ndarray, points: np.ndarray) -> np.ndarray:
    lo = box[:, 0] - BOX_MARGIN
    hi = box[:, 1] + BOX_MARGIN
    inside = np.all((points >= lo) & (points <= hi), axis=1)
    out = np.full(len(points), -np.inf)
    out[inside] = 0.0  # constant inside; the value cancels under normalization
    return out


def _sample_ring_mixture(msgs: list, count: int, rng: np.random.Generator,
                         noise: GaussianRangeNoise) -> np.ndarray:
    """Fresh draws from the equal-part mixture of the messages' ring densities."""
    src = rng.integers(0, len(msgs), count)
    pts = np.empty((count, 2))
    for m, msg in enumerate(msgs):
        take = np.flatnonzero(src == m)
        if take.size == 0:
            continue
        senders = msg.sender_locations[
            rng.choice(msg.sender_locations.shape[0], size=take.size,
                       p=msg.sender_weights)]
        pts[take] = ring_points(senders, msg.y, noise, rng)
    return pts


def _log_message_terms(msgs: list, pts: np.ndarray):
    """Stacked closed-form (likelihood, ring-density) logs for all messages."""
    liks = np.empty((len(msgs), len(pts)))
    dens = np.empty((len(msgs), len(pts)))
    for m, msg in enumerate(msgs):
        liks[m], dens[m] = message_log_terms(msg, pts)
    return liks, dens


def _log_mean_exp(rows: np.ndarray) -> np.ndarray:
    peak = rows.max(axis=0)
    return peak + np.log(np.exp(rows - peak).mean(axis=0))


def _log_pred_density(pred: PredictionMessage, pts: np.ndarray, sigma2: float,
                      cloud_scaled: bool = False) -> np.ndarray:
    if pred.diffuse_box is not None:
        return _box_log_density(pred.diffuse_box, pts)
    locations = pred.particles.locations
    if cloud_scaled:
        # A spread-out prediction (ring arcs, mode pairs) is evaluated with a
        # bandwidth scaled to the cloud, so kernel-estimate lumps do not read
        # as prior structure.  Radial sharpness is restored by the incoming
        # range messages at every step, so only sampling noise is lost.
        spread = float(locations.var(axis=0).mean())
        sigma2 = max(sigma2, spread * len(locations) ** (-1.0 / 3.0))
    prior_kernel = KernelMessage(locations, pred.particles.weights, sigma2)
    logp = kde_log_many(prior_kernel, pts)
    logp[logp <= LOG_FLOOR + 1.0] = -np.inf
    return logp


def bootstrap_update(pred: PredictionMessage, msgs: list, noise: GaussianRangeNoise,
                     rng: np.random.Generator, j_out: int | None = None,
                     sigma_K2: float = 2.0) -> ParticleSet:
    """Sample the belief from the incoming-message mixture (importance corrected).

    Proposal: fresh ring draws from the messages.  Target density: prediction
    density times the product of the closed-form message values.  Velocities
    are attached from the prediction particles, which is exact while location
    and velocity are independent (the diffuse-prior regime this route exists
    for).
    """
    particles = pred.particles
    j_out = j_out or particles.size
    pts = _sample_ring_mixture(msgs, j_out, rng, noise)
    liks, dens = _log_message_terms(msgs, pts)
    logw = liks.sum(axis=0) + _log_pred_density(pred, pts, sigma_K2) - _log_mean_exp(dens)
    if not np.isfinite(logw).any():
        raise DegenerateWeightsError("bootstrap proposal found no mass")
    weights = np.exp(logw - logw[np.isfinite(logw)].max())
    weights[~np.isfinite(logw)] = 0.0
    vel = particles.states[rng.integers(0, particles.size, j_out), 2:]
    states = np.hstack([pts, vel]) if particles.states.shape[1] > 2 else pts
    idx = resample_indices(weights, j_out, rng)
    return ParticleSet.equal_weights(states[idx])


def mixture_update(pred: PredictionMessage, msgs: list, noise: GaussianRangeNoise,
                   rng: np.random.Generator, j_out: int | None = None,
                   sigma_K2: float = 2.0) -> ParticleSet:
    """Belief sampling from a half prediction, half ring-mixture proposal.

    While a belief is still spread out (rings, mode pairs), reweighting the
    prediction particles alone lets resampling noise extinguish a viable mode:
    mode proportions are inherited instead of being re-derived, and a collapse
    is absorbing.  Drawing half the candidates from the incoming messages
    rebalances the modes against the actual product at every step; the
    importance weights use the full mixture proposal density, so the sampler
    stays consistent for the smoothed product.
    """
    particles = pred.particles
    j_out = j_out or particles.size
    n_pred = j_out // 2
    pred_idx = rng.integers(0, particles.size, n_pred)
    pts = np.vstack([
        particles.locations[pred_idx],
        _sample_ring_mixture(msgs, j_out - n_pred, rng, noise),
    ])
    liks, dens = _log_message_terms(msgs, pts)
    log_mix = _log_mean_exp(dens)
    log_pred = _log_pred_density(pred, pts, sigma_K2, cloud_scaled=True)
    with np.errstate(invalid="ignore"):
        log_proposal = np.logaddexp(log_pred, log_mix) - np.log(2.0)
    log_proposal[~np.isfinite(log_pred)] = log_mix[~np.isfinite(log_pred)] - np.log(2.0)
    logw = log_pred + liks.sum(axis=0) - log_proposal
    if not np.isfinite(logw).any():
        raise DegenerateWeightsError("mixture proposal found no mass")
    weights = np.exp(logw - logw[np.isfinite(logw)].max())
    weights[~np.isfinite(logw)] = 0.0
    if particles.states.shape[1] > 2:
        # Velocities ride along from the nearest prediction particle, keeping
        # whatever location-velocity structure the prediction carries.
        nearest = _nearest_indices(particles.locations, pts)
        nearest[:n_pred] = pred_idx
        states = np.hstack([pts, particles.states[nearest, 2:]])
    else:
        states = pts
    idx = resample_indices(weights, j_out, rng)
    return ParticleSet.equal_weights(states[idx])


def _nearest_indices(ref: np.ndarray, pts: np.ndarray) -> np.ndarray:
    d2 = (
        np.sum(pts * pts, axis=1)[:, None]
        + np.sum(ref * ref, axis=1)[None, :]
        - 2.0 * pts @ ref.T
    )
    return d2.argmin(axis=1)


def extrinsic_message(y: float, sender_pred: ParticleSet, kernels_except_receiver: list,
                      noise: GaussianRangeNoise, sigma_K2: float,
                      rng: np.random.Generator, sender_id: int = -1,
                      receiver_id: int = -1) -> MeasurementMessage:
    """Range message whose sender density excludes the receiver's own message.

    The sender density is the prediction message times all incoming message
    kernels except the one from the receiver; with no other messages this
    reduces to the prediction message.
    """
    sender = belief_update(sender_pred, kernels_except_receiver, rng)
    return measurement_message(y, sender, noise, sigma_K2, rng, sender_id, receiver_id)


# ---------------------------------------------------------------------------
# Network-level engine
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NodeModel:
    node_id: int
    kind: str  # "target" | "anchor" | "mobile"
    prior: object
    motion: MotionModel


@dataclass
class EngineConfig:
    particles: int = 500
    iterations: int = 3
    kernel_variance: float = 2.0
    mode: str = "distributed-lc"
    consensus: ConsensusConfig | None = field(default_factory=ConsensusConfig)
    basis: BasisSpec = field(default_factory=BasisSpec)
    basis_scale: float = 10.0
    censor_variance: float = 1e4
    ess_min: float = 8.0
    # Regularized resampling: resampled beliefs are jittered by a rule-of-thumb
    # kernel bandwidth so repeated per-iteration resampling cannot deplete the
    # particle support (velocity components in particular carry no fresh
    # diversity otherwise).  Location jitter is capped so the ring structure of
    # barely-localized beliefs survives; velocity jitter is floored so a
    # collapsed velocity marginal can still re-adapt when a node's motion
    # changes (e.g. a sensor released by the movement gate).
    rejuvenate: bool = True
    location_jitter_cap: float = 0.35
    velocity_jitter_floor: float = 0.02
    # Beliefs whose prediction is still spread out (location variance sum above
    # this) are sampled through mixture_update; unimodal tight beliefs use the
    # plain prediction-particle reweight.
    mix_variance: float = 35.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass
class NetState:
    """Beliefs after the final iteration of one time step."""

    beliefs: dict  # sensor id -> Belief
    target_beliefs: dict  # sensor id -> ParticleSet (local copy)
    events: dict = field(default_factory=dict)


def _bump(events: dict, key: str, amount: int = 1):
    events[key] = events.get(key, 0) + amount


class CoslatEngine:
    """Runs the per-step, P-iteration message schedule over a sensor network."""

    def __init__(self, nodes: dict, noise: GaussianRangeNoise, cfg: EngineConfig,
                 stream):
        self.nodes = nodes
        self.noise = noise
        self.cfg = cfg
        self.stream = stream  # callable (*path) -> np.random.Generator
        self.sensor_ids = tuple(sorted(k for k in nodes if k != TARGET_ID))
        if TARGET_ID not in nodes:
            raise ValueError("engine requires a target node (id 0)")

    # -- setup ---------------------------------------------------------------

    def initial_state(self) -> NetState:
        j = self.cfg.particles
        beliefs = {}
        for k in self.sensor_ids:
            node = self.nodes[k]
            pset = ParticleSet.equal_weights(node.prior.sample(j, self.stream("prior", k)))
            beliefs[k] = Belief(k, 0, pset, node.prior.diffuse_box)
        target = ParticleSet.equal_weights(
            self.nodes[TARGET_ID].prior.sample(j, self.stream("prior", TARGET_ID)))
        target_beliefs = {k: target for k in self.sensor_ids}
        return NetState(beliefs, target_beliefs, {})

    def _basis_for_step(self, n: int) -> BasisSpec:
        mu = self.nodes[TARGET_ID].prior.mean()
        center = (np.linalg.matrix_power(self.nodes[TARGET_ID].motion.G, n) @ mu)[:2]
        return self.cfg.basis.framed(center, self.cfg.basis_scale)

    # -- one time step ---------------------------------------------------------

    def step(self, state: NetState, topo, measurements: dict, n: int) -> NetState:
        cfg = self.cfg
        events = dict(state.events)

        preds = {}
        for k in self.sensor_ids:
            node = self.nodes[k]
            prev = state.beliefs[k]
            preds[k] = prediction_message(
                prev.particles, node.motion, self.stream("pred", n, k),
                owner=k, dirac=node.prior.is_dirac, diffuse_box=prev.diffuse_box)

        # All sensors propagate their local target copy with shared noise draws,
        # so identical copies stay identical.
        target_rng = self.stream("pred", n, TARGET_ID)
        shared_u = self.nodes[TARGET_ID].motion.sample_noise(target_rng, cfg.particles)
        target_preds = {}
        propagated = {}
        for k in self.sensor_ids:
            prev = state.target_beliefs[k]
            key = id(prev)
            if key not in propagated:
                propagated[key] = ParticleSet.equal_weights(
                    propagate_many(prev.states, self.nodes[TARGET_ID].motion, shared_u))
            target_preds[k] = propagated[key]

        beliefs = {
            k: Belief(k, 0, preds[k].particles, preds[k].diffuse_box)
            for k in self.sensor_ids
        }
        target_cur = dict(target_preds)
        basis = self._basis_for_step(n)

        sensor_logvecs: dict = {k: {} for k in self.sensor_ids}
        target_logvecs: dict = {}
        observers = tuple(sorted(topo.observers))

        for p in range(1, cfg.iterations + 1):
            censored = {
                k: location_variance_sum(beliefs[k].particles) > cfg.censor_variance
                for k in self.sensor_ids
            }
            events_censored = sum(censored.values())
            if events_censored:
                _bump(events, "censored_sensors", events_censored)

            incoming = {k: [] for k in self.sensor_ids}
            for k in self.sensor_ids:
                for l in topo.meas.get(k, ()):
                    y = measurements[(k, l)]
                    rng = self.stream("msg", n, p, k, l)
                    if l == TARGET_ID:
                        msg = self._target_to_sensor(k, y, target_cur, target_preds,
                                                     target_logvecs, observers, rng,
                                                     events)
                    else:
                        if censored[l]:
                            continue
                        msg = measurement_message(y, beliefs[l].particles, self.noise,
                                                  cfg.kernel_variance, rng, l, k)
                    incoming[k].append(msg)

            target_incoming = {}
            for l in observers:
                if censored[l]:
                    continue
                y = measurements[(l, TARGET_ID)]
                rng = self.stream("msg", n, p, TARGET_ID, l)
                target_incoming[l] = self._sensor_to_target(
                    l, y, beliefs, preds, sensor_logvecs, rng, events)

            final = p == cfg.iterations
            new_beliefs = {}
            new_sensor_logvecs = {}
            for k in self.sensor_ids:
                if self.nodes[k].prior.is_dirac:
                    new_beliefs[k] = replace(beliefs[k], iteration=p)
                    new_sensor_logvecs[k] = {}
                    continue
                belief, logvecs = self._update_sensor(k, preds[k], incoming[k], n, p,
                                                      events, final)
                new_beliefs[k] = replace(belief, iteration=p)
                new_sensor_logvecs[k] = logvecs
            beliefs = new_beliefs
            sensor_logvecs = new_sensor_logvecs

            target_cur, target_logvecs = self._update_target(
                target_incoming, target_preds, topo, basis, n, p, events, final)

        return NetState(beliefs, target_cur, events)

    # -- message construction ---------------------------------------------------

    def _target_to_sensor(self, k: int, y: float, target_cur: dict, target_preds: dict,
                          target_logvecs: dict, observers: tuple,
                          rng: np.random.Generator, events: dict) -> MeasurementMessage:
        cfg = self.cfg
        if cfg.mode == "exact-extrinsic" and target_logvecs:
            pred = target_preds[k]
            partial = np.zeros(pred.size)
            for sender, vec in target_logvecs.items():
                if sender != k:
                    partial += vec
            if partial.max() > len(target_logvecs) * LOG_FLOOR + 1.0:
                weights = np.exp(partial - partial.max())
                idx = resample_indices(weights, pred.size, rng)
                sender_set = ParticleSet.equal_weights(pred.states[idx])
            else:
                _bump(events, "extrinsic_fallbacks")
                sender_set = target_cur[k]
        else:
            sender_set = target_cur[k]
        return measurement_message(y, sender_set, self.noise, cfg.kernel_variance,
                                   rng, TARGET_ID, k)

    def _sensor_to_target(self, l: int, y: float, beliefs: dict, preds: dict,
                          sensor_logvecs: dict, rng: np.random.Generator,
                          events: dict) -> MeasurementMessage:
        cfg = self.cfg
        if cfg.mode == "exact-extrinsic" and sensor_logvecs[l]:
            pred = preds[l].particles
            vecs = [vec for sender, vec in sensor_logvecs[l].items() if sender != TARGET_ID]
            if vecs:
                partial = np.sum(vecs, axis=0)
                if partial.max() > len(vecs) * LOG_FLOOR + 1.0:
                    weights = np.exp(partial - partial.max())
                    idx = resample_indices(weights, pred.size, rng)
                    sender_set = ParticleSet.equal_weights(pred.states[idx])
                else:
                    _bump(events, "extrinsic_fallbacks")
                    sender_set = beliefs[l].particles
            else:
                sender_set = pred
        else:
            sender_set = beliefs[l].particles
        return measurement_message(y, sender_set, self.noise, cfg.kernel_variance,
                                   rng, l, TARGET_ID)

    # -- belief updates -----------------------------------------------------------

    def _rejuvenated(self, pset: ParticleSet, rng: np.random.Generator) -> ParticleSet:
        """Silverman-style jitter after resampling (kde-smoothed belief samples)."""
        cfg = self.cfg
        if not cfg.rejuvenate:
            return pset
        states = pset.states
        scale = self._jitter_scale(states)
        if not scale.any():
            return pset
        jittered = states + rng.normal(0.0, 1.0, states.shape) * scale
        return ParticleSet(jittered, pset.weights)

    def _jitter_shared(self, pset: ParticleSet, noise: np.ndarray) -> ParticleSet:
        """Rejuvenation with a pre-drawn noise matrix (identical copies stay identical)."""
        if not self.cfg.rejuvenate:
            return pset
        states = pset.states
        scale = self._jitter_scale(states)
        if not scale.any():
            return pset
        return ParticleSet(states + noise[: len(states)] * scale, pset.weights)

    def _jitter_scale(self, states: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        scale = states.std(axis=0) * states.shape[0] ** (-1.0 / 6.0)
        scale[:2] = np.minimum(scale[:2], cfg.location_jitter_cap)
        if states.shape[1] > 2:
            scale[2:] = np.maximum(scale[2:], cfg.velocity_jitter_floor)
        return scale

    def _update_sensor(self, k: int, pred: PredictionMessage, msgs: list, n: int,
                       p: int, events: dict, final: bool = True):
        cfg = self.cfg
        if not msgs:
            return Belief(k, p, pred.particles, pred.diffuse_box), {}
        locations = pred.particles.locations
        logvecs = {m.sender: message_log_terms(m, locations)[0] for m in msgs}
        rng = self.stream("belief", n, p, k)
        if location_variance_sum(pred.particles) > cfg.mix_variance:
            # A diffuse prior box carries no structure worth proposing from;
            # spend every candidate on the messages.
            sampler = bootstrap_update if pred.diffuse_box is not None else mixture_update
            try:
                pset = sampler(pred, msgs, self.noise, rng,
                               sigma_K2=cfg.kernel_variance)
                if final:
                    pset = self._rejuvenated(pset, rng)
                _bump(events, "mixture_updates")
                return Belief(k, p, pset, None), logvecs
            except DegenerateWeightsError:
                _bump(events, "degenerate_rebroadcasts")
                return Belief(k, p, pred.particles, pred.diffuse_box), logvecs
        logw = np.sum(list(logvecs.values()), axis=0)
        if not _is_all_floored(logw, len(msgs)):
            weights = np.exp(logw - logw.max())
            if effective_sample_size(weights) >= cfg.ess_min:
                idx = resample_indices(weights * pred.particles.weights,
                                       pred.particles.size, rng)
                pset = ParticleSet.equal_weights(pred.particles.states[idx])
                if final:
                    pset = self._rejuvenated(pset, rng)
                return Belief(k, p, pset, None), logvecs
        try:
            pset = bootstrap_update(pred, msgs, self.noise, rng,
                                    sigma_K2=cfg.kernel_variance)
            if final:
                pset = self._rejuvenated(pset, rng)
            _bump(events, "bootstrap_updates")
            return Belief(k, p, pset, None), logvecs
        except DegenerateWeightsError:
            log.warning("node %s step %s iter %s: degenerate update, keeping prediction",
                        k, n, p)
            _bump(events, "degenerate_rebroadcasts")
            return Belief(k, p, pred.particles, pred.diffuse_box), logvecs

    def _update_target(self, target_incoming: dict, target_preds: dict, topo,
                       basis: BasisSpec, n: int, p: int, events: dict,
                       final: bool = True):
        cfg = self.cfg
        if not target_incoming:
            return dict(target_preds), {}
        rng = self.stream("lc-resample", n, p)
        if cfg.mode == "distributed-lc":
            kernels = {l: m.kernel for l, m in target_incoming.items()}
            beliefs = lc_target_belief(kernels, target_preds, topo.comm, basis,
                                       cfg.consensus, rng, events)
            if not final:
                return beliefs, {}
            shared_noise = rng.normal(0.0, 1.0, (cfg.particles, 4))
            jittered = {}
            cache = {}
            for k, belief in beliefs.items():
                key = id(belief)
                if key not in cache:
                    cache[key] = self._jitter_shared(belief, shared_noise)
                jittered[k] = cache[key]
            return jittered, {}

        # Centralized product (also the substrate for exact-extrinsic mode).
        pred = target_preds[self.sensor_ids[0]]
        locations = pred.locations
        logvecs = {l: kde_log_many(m.kernel, locations)
                   for l, m in target_incoming.items()}
        logw = np.sum(list(logvecs.values()), axis=0)
        if _is_all_floored(logw, len(logvecs)):
            log.warning("target update degenerate at step %s iter %s", n, p)
            _bump(events, "degenerate_target_updates")
            return dict(target_preds), logvecs
        weights = np.exp(logw - logw.max()) * pred.weights
        idx = resample_indices(weights, pred.size, rng)
        belief = ParticleSet.equal_weights(pred.states[idx])
        if final:
            belief = self._rejuvenated(belief, rng)
        return {k: belief for k in self.sensor_ids}, logvecs


def coslat_step(engine: CoslatEngine, state: NetState, topo, measurements: dict,
                n: int) -> NetState:
    """Functional wrapper over CoslatEngine.step."""
    return engine.step(state, topo, measurements, n)
