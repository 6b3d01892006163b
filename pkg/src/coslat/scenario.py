"""Scenario construction: node layout, trajectories, topology, measurements.

The default network has seven sensors (three anchors, four mobiles) on a
50 x 50 field plus one noncooperative target crossing the field diagonally.
The upper-right mobile sensor measures only within 20 m in both scenarios;
in scenario 2 the lower-left mobile sensor is restricted to 20 m as well.
Each restricted sensor starts with a single anchor inside its measurement
radius, so range-only self-localization alone leaves its posterior multimodal
until the target passes through its measurement region.

Mobile sensors hold still until the movement gate releases them (location
variance sum below the threshold); from release they follow their cached
trajectory realization, delayed by the time spent frozen.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .consensusnet import CommGraph
from .particles import ParticleSet, location_variance_sum, moments
from .statespace import (
    BoxVelocityPrior,
    DiracPrior,
    GaussianPrior,
    GaussianRangeNoise,
    MotionModel,
    propagate,
)

TARGET_ID = 0

PRIOR_BOX = ((-500.0, 500.0), (-500.0, 500.0))
MOBILE_VEL_MEAN = (-0.1, -0.1)
MOBILE_VEL_COV = ((0.1, 0.0), (0.0, 0.1))
TARGET_PRIOR_MEAN = (0.0, 5.0, 0.4, 0.4)
TARGET_PRIOR_COV_DIAG = (1.0, 1.0, 0.001, 0.001)


@dataclass(frozen=True)
class NodeSpec:
    node_id: int
    kind: str  # "target" | "anchor" | "mobile"
    position: tuple  # (x1, x2) at n = 0
    meas_radius: float | None = None  # None: entire field
    target_radius: float | None = None

    def __post_init__(self):
        if self.kind not in ("target", "anchor", "mobile"):
            raise ValueError(f"unknown node kind {self.kind!r}")
        if self.meas_radius is not None and self.meas_radius <= 0:
            raise ValueError("measurement radius must be positive")
        if self.target_radius is not None and self.target_radius <= 0:
            raise ValueError("target radius must be positive")
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))


@dataclass
class ScenarioConfig:
    scenario: int = 2
    nodes: tuple = ()
    comm_range: float = 56.0
    sigma_v2: float = 2.0
    sigma_u2: float = 0.0005
    steps: int = 75
    runs: int = 50
    seed: int = 122  # default trajectory realization keeps the target inside the
    # restricted sensors' measurement regions over the windows the benchmark
    # scenarios assume (one fixed realization is reused across all runs)
    particles: int = 500
    bp_iterations: int = 3
    consensus_iterations: int = 5
    basis_degree: int = 3
    basis_scale: float = 10.0
    kernel_variance: float | None = None  # None: sigma_v2
    gate_threshold: float | None = None  # None: 5 * sigma_v2
    censor_variance: float = 1e4
    prior_box: tuple = PRIOR_BOX
    mobile_vel_mean: tuple = MOBILE_VEL_MEAN
    mobile_vel_cov: tuple = MOBILE_VEL_COV
    target_prior_mean: tuple = TARGET_PRIOR_MEAN
    target_prior_cov_diag: tuple = TARGET_PRIOR_COV_DIAG

    @property
    def effective_kernel_variance(self) -> float:
        return self.sigma_v2 if self.kernel_variance is None else self.kernel_variance

    @property
    def effective_gate_threshold(self) -> float:
        return 5.0 * self.sigma_v2 if self.gate_threshold is None else self.gate_threshold

    @property
    def sensor_ids(self) -> tuple:
        return tuple(sorted(n.node_id for n in self.nodes if n.node_id != TARGET_ID))

    @property
    def mobile_ids(self) -> tuple:
        return tuple(sorted(n.node_id for n in self.nodes if n.kind == "mobile"))

    @property
    def anchor_ids(self) -> tuple:
        return tuple(sorted(n.node_id for n in self.nodes if n.kind == "anchor"))

    def node(self, node_id: int) -> NodeSpec:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def motion_model(self) -> MotionModel:
        return MotionModel(sigma_u2=self.sigma_u2)

    def noise_model(self) -> GaussianRangeNoise:
        return GaussianRangeNoise(self.sigma_v2)

    def prior_for(self, node_id: int):
        spec = self.node(node_id)
        if spec.kind == "anchor":
            return DiracPrior(np.array([*spec.position, 0.0, 0.0]))
        if spec.kind == "mobile":
            return BoxVelocityPrior(self.prior_box, self.mobile_vel_mean, self.mobile_vel_cov)
        return GaussianPrior(self.target_prior_mean, np.diag(self.target_prior_cov_diag))


RESTRICTED_RADIUS = 20.0

# Default layout: anchors 1-3, mobiles 4-7 (4 upper-left, 5 upper-right,
# 6 lower-left, 7 lower-right).  The restricted upper-right sensor has exactly
# two in-range partners (anchor 3 and mobile 7), which leaves a stable
# two-point range ambiguity: not enough for self-localization, but the
# ambiguity axis lies along the target path, so the first target measurements
# discriminate the modes decisively while the mode midpoint (the separate
# tracker's point estimate) stays nearly range-consistent with the true
# location for targets on the path.  The restricted lower-left sensor has a
# single in-range partner (anchor 1) and sits well off the 45-degree bearing
# from it, so the passing target sweeps the mirror ambiguity away rather than
# onto the true location.
DEFAULT_POSITIONS = {
    TARGET_ID: (0.0, 5.0),
    1: (0.0, 0.0),
    2: (50.0, 10.0),
    3: (17.5, 31.5),
    4: (4.0, 27.0),
    5: (26.4, 26.4),
    6: (8.0, 2.0),
    7: (31.5, 17.5),
}
UPPER_RIGHT_ID = 5
LOWER_LEFT_ID = 6


def default_config(scenario: int = 2, **overrides) -> ScenarioConfig:
    """Scenario 1 restricts only the upper-right sensor; scenario 2 also the lower-left."""
    if scenario not in (1, 2):
        raise ValueError("scenario must be 1 or 2")
    restricted = {UPPER_RIGHT_ID}
    if scenario == 2:
        restricted.add(LOWER_LEFT_ID)
    nodes = []
    for node_id, pos in DEFAULT_POSITIONS.items():
        if node_id == TARGET_ID:
            nodes.append(NodeSpec(node_id, "target", pos))
        elif node_id <= 3:
            nodes.append(NodeSpec(node_id, "anchor", pos))
        else:
            radius = RESTRICTED_RADIUS if node_id in restricted else None
            nodes.append(NodeSpec(node_id, "mobile", pos, radius, radius))
    return ScenarioConfig(scenario=scenario, nodes=tuple(nodes), **overrides)


def validate_config(cfg: ScenarioConfig) -> list[str]:
    """Returns a list of problems; empty means the configuration is usable."""
    errors = []
    ids = [n.node_id for n in cfg.nodes]
    if len(set(ids)) != len(ids):
        errors.append("node ids must be unique")
    if TARGET_ID not in ids:
        errors.append("configuration needs a target node with id 0")
    targets = [n for n in cfg.nodes if n.kind == "target"]
    if len(targets) != 1 or (targets and targets[0].node_id != TARGET_ID):
        errors.append("exactly one target node with id 0 is required")
    if not any(n.kind == "anchor" for n in cfg.nodes):
        errors.append("at least one anchor is required")
    if cfg.scenario not in (1, 2):
        errors.append("scenario must be 1 or 2")
    if cfg.comm_range <= 0:
        errors.append("comm_range must be positive")
    if cfg.sigma_v2 <= 0:
        errors.append("sigma_v2 must be positive")
    if cfg.sigma_u2 < 0:
        errors.append("sigma_u2 must be nonnegative")
    if cfg.steps < 1:
        errors.append("steps must be >= 1")
    if cfg.runs < 1:
        errors.append("runs must be >= 1")
    if cfg.particles < 2:
        errors.append("particles must be >= 2")
    if cfg.bp_iterations < 1:
        errors.append("bp_iterations must be >= 1")
    if cfg.consensus_iterations < 0:
        errors.append("consensus_iterations must be >= 0")
    return errors


# ---------------------------------------------------------------------------
# Configuration file I/O (JSON)
# ---------------------------------------------------------------------------

def save_config(cfg: ScenarioConfig, path):
    payload = asdict(cfg)
    payload["nodes"] = [asdict(n) for n in cfg.nodes]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        nodes = tuple(NodeSpec(**{**n, "position": tuple(n["position"])})
                      for n in payload.pop("nodes"))
        for key in ("prior_box", "mobile_vel_mean", "mobile_vel_cov",
                    "target_prior_mean", "target_prior_cov_diag"):
            if key in payload:
                payload[key] = _to_tuple(payload[key])
        cfg = ScenarioConfig(nodes=nodes, **payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"invalid configuration file {path}: {exc}") from exc
    return cfg


def _to_tuple(value):
    if isinstance(value, list):
        return tuple(_to_tuple(v) for v in value)
    return value


# ---------------------------------------------------------------------------
# Topology
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TopologySnapshot:
    """Per-step communication edges, measurement sets, and target observers."""

    comm: CommGraph
    meas: dict  # sensor id -> tuple of measured node ids (may include 0)
    observers: frozenset  # sensors with a target measurement

    def __post_init__(self):
        expected = frozenset(k for k, targets in self.meas.items() if TARGET_ID in targets)
        if expected != self.observers:
            raise ValueError("observer set inconsistent with measurement sets")


def build_topology(locations: dict, cfg: ScenarioConfig) -> TopologySnapshot:
    """Distance-thresholded topology (thresholds inclusive).

    Sensor-to-sensor measurement links additionally require a communication
    edge; target observation depends only on the sensor's target radius.
    Anchors acquire only target measurements (their own beliefs are exact and
    measurements acquired by a node feed only that node's own update).
    """
    sensor_ids = cfg.sensor_ids
    comm = CommGraph.from_positions(
        {k: locations[k] for k in sensor_ids}, cfg.comm_range)
    meas = {}
    observers = set()
    for k in sensor_ids:
        spec = cfg.node(k)
        targets = []
        if spec.kind != "anchor":
            for l in sensor_ids:
                if l == k or not comm.has_edge(k, l):
                    continue
                d = float(np.linalg.norm(np.asarray(locations[k]) - np.asarray(locations[l])))
                if spec.meas_radius is None or d <= spec.meas_radius:
                    targets.append(l)
        d_target = float(np.linalg.norm(
            np.asarray(locations[k]) - np.asarray(locations[TARGET_ID])))
        if spec.target_radius is None or d_target <= spec.target_radius:
            targets.append(TARGET_ID)
            observers.add(k)
        meas[k] = tuple(sorted(targets))
    return TopologySnapshot(comm, meas, frozenset(observers))


# ---------------------------------------------------------------------------
# Truth generation and movement gating
# ---------------------------------------------------------------------------

def generate_truth(cfg: ScenarioConfig, rng_for_node) -> dict:
    """One trajectory realization per node: id -> (steps + 1, 4) state array.

    Locations start exactly at the configured layout; mobile and target
    velocities are drawn from the velocity part of the respective priors.
    `rng_for_node` maps a node id to its generator, so the realization does
    not depend on node iteration order.
    """
    model = cfg.motion_model()
    out = {}
    for spec in cfg.nodes:
        rng = rng_for_node(spec.node_id)
        if spec.kind == "anchor":
            state = np.array([*spec.position, 0.0, 0.0])
            out[spec.node_id] = np.tile(state, (cfg.steps + 1, 1))
            continue
        if spec.kind == "mobile":
            vel = rng.multivariate_normal(np.asarray(cfg.mobile_vel_mean),
                                          np.asarray(cfg.mobile_vel_cov))
        else:
            mean = np.asarray(cfg.target_prior_mean)[2:]
            cov = np.diag(np.asarray(cfg.target_prior_cov_diag)[2:])
            vel = rng.multivariate_normal(mean, cov)
        states = np.empty((cfg.steps + 1, 4))
        states[0] = [*spec.position, *vel]
        for n in range(1, cfg.steps + 1):
            u = rng.normal(0.0, np.sqrt(cfg.sigma_u2), size=2)
            states[n] = propagate(states[n - 1], model, u)
        out[spec.node_id] = states
    return out


def save_truth(truth: dict, path):
    """Flat CSV cache: node_id, n, x1, x2, v1, v2."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["node_id", "n", "x1", "x2", "v1", "v2"])
        for node_id in sorted(truth):
            for n, state in enumerate(truth[node_id]):
                writer.writerow([node_id, n] + [f"{v:.12g}" for v in state])


def load_truth(path) -> dict:
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["node_id", "n", "x1", "x2", "v1", "v2"]:
            raise ValueError(f"unexpected truth table header in {path}: {header}")
        for row in reader:
            node_id, n = int(row[0]), int(row[1])
            rows.setdefault(node_id, {})[n] = [float(v) for v in row[2:6]]
    out = {}
    for node_id, by_step in rows.items():
        steps = sorted(by_step)
        if steps != list(range(len(steps))):
            raise ValueError(f"truth table for node {node_id} has missing steps")
        out[node_id] = np.array([by_step[n] for n in steps])
    return out


def gate_movement(belief_particles: ParticleSet, threshold: float) -> bool:
    """True when the sum of estimated location-coordinate variances is below threshold."""
    return location_variance_sum(belief_particles) < threshold


class MovementGate:
    """Latched movement release per mobile sensor."""

    def __init__(self, cfg: ScenarioConfig):
        self.threshold = cfg.effective_gate_threshold
        self.released: dict = {k: False for k in cfg.mobile_ids}

    def update(self, node_id: int, belief_particles: ParticleSet) -> bool:
        if not self.released.get(node_id, True):
            if gate_movement(belief_particles, self.threshold):
                self.released[node_id] = True
        return self.released.get(node_id, True)


class WorldState:
    """True node states, with mobile motion delayed until the gate releases.

    A frozen mobile sensor sits at its start location with zero velocity;
    after release it replays its cached trajectory from the beginning, so the
    path shape is the shared realization and only the departure time depends
    on the estimation run.
    """

    def __init__(self, cfg: ScenarioConfig, truth: dict):
        self.cfg = cfg
        self.truth = truth
        self.progress = {k: 0 for k in cfg.mobile_ids}
        self.moving = {k: False for k in cfg.mobile_ids}
        self.step_index = 0

    def advance(self, released: dict):
        """Move the world to the next step given per-sensor release flags."""
        self.step_index += 1
        for k in self.cfg.mobile_ids:
            if self.moving[k] or released.get(k, False):
                self.moving[k] = True
                self.progress[k] += 1

    def state_of(self, node_id: int) -> np.ndarray:
        if node_id in self.progress:
            idx = self.progress[node_id]
            state = self.truth[node_id][idx].copy()
            if idx == 0:
                state[2:] = 0.0  # held in place until released
            return state
        return self.truth[node_id][self.step_index].copy()

    def locations(self) -> dict:
        return {spec.node_id: self.state_of(spec.node_id)[:2] for spec in self.cfg.nodes}


def generate_measurements(world_locations: dict, topo: TopologySnapshot,
                          noise: GaussianRangeNoise, rng_for_pair) -> dict:
    """One noisy range per (acquirer, measured-node) measurement link.

    `rng_for_pair(k, l)` supplies the generator for that ordered pair, which
    keeps noise draws independent across pairs and identical across methods
    that share the pair streams.
    """
    out = {}
    for k in sorted(topo.meas):
        for l in topo.meas[k]:
            d = float(np.linalg.norm(
                np.asarray(world_locations[k]) - np.asarray(world_locations[l])))
            v = float(noise.sample(rng_for_pair(k, l)))
            out[(k, l)] = d + v
    return out
