"""Monte Carlo experiment runner, RMSE aggregation, and CSV export.

One experiment fixes a single trajectory realization (shared by every run)
and draws fresh measurement noise per run.  Within a run, both methods
consume the same per-(step, pair) noise streams, so their measurement
sequences coincide exactly whenever their movement-gate schedules do.
Everything is deterministic given (seed, config): run records come out
byte-identical no matter how runs are distributed over workers.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baseline import csl_step, dtt_step
from .consensusnet import ConsensusConfig
from .lconsensus import BasisSpec
from .msgpass import TARGET_ID, CoslatEngine, EngineConfig, NetState, NodeModel
from .particles import moments
from .scenario import (
    MovementGate,
    ScenarioConfig,
    WorldState,
    build_topology,
    generate_measurements,
    generate_truth,
)
from .seeding import substream

log = logging.getLogger(__name__)

METHODS = ("coslat", "baseline")


@dataclass
class RunRecord:
    run: int
    method: str
    sensor_est: np.ndarray  # (N, K, 2) location estimates, sensor order = cfg.sensor_ids
    target_est: np.ndarray  # (N, K, 2) per-sensor local target estimates
    sensor_truth: np.ndarray  # (N, K, 2)
    target_truth: np.ndarray  # (N, 2)
    events: dict
    measurement_digest: str

    @property
    def valid(self) -> bool:
        return bool(np.isfinite(self.sensor_est).all() and np.isfinite(self.target_est).all())


def make_engine(cfg: ScenarioConfig, mode: str, stream) -> CoslatEngine:
    nodes = {
        spec.node_id: NodeModel(spec.node_id, spec.kind, cfg.prior_for(spec.node_id),
                                cfg.motion_model())
        for spec in cfg.nodes
    }
    engine_cfg = EngineConfig(
        particles=cfg.particles,
        iterations=cfg.bp_iterations,
        kernel_variance=cfg.effective_kernel_variance,
        mode=mode,
        consensus=ConsensusConfig(cfg.consensus_iterations),
        basis=BasisSpec(cfg.basis_degree),
        basis_scale=cfg.basis_scale,
        censor_variance=cfg.censor_variance,
    )
    return CoslatEngine(nodes, cfg.noise_model(), engine_cfg, stream)


def run_single(cfg: ScenarioConfig, truth: dict, run_idx: int, method: str,
               mode: str = "distributed-lc") -> RunRecord:
    """Simulate one (run, method) pair on the shared truth realization."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    noise = cfg.noise_model()
    stream = lambda *path: substream(cfg.seed, "flt", run_idx, method, *path)  # noqa: E731
    engine = make_engine(cfg, mode, stream)
    state = engine.initial_state()
    world = WorldState(cfg, truth)
    gate = MovementGate(cfg)
    sensor_ids = cfg.sensor_ids
    n_steps = cfg.steps

    sensor_est = np.empty((n_steps, len(sensor_ids), 2))
    target_est = np.empty((n_steps, len(sensor_ids), 2))
    sensor_truth = np.empty((n_steps, len(sensor_ids), 2))
    target_truth = np.empty((n_steps, 2))
    digest = hashlib.sha256()

    for n in range(1, n_steps + 1):
        world.advance(gate.released)
        locations = world.locations()
        topo = build_topology(locations, cfg)
        pair_rng = lambda k, l: substream(cfg.seed, "meas", run_idx, n, k, l)  # noqa: E731
        measurements = generate_measurements(locations, topo, noise, pair_rng)
        for key in sorted(measurements):
            digest.update(f"{key[0]},{key[1]},{measurements[key]:.12e};".encode())

        if method == "coslat":
            state = engine.step(state, topo, measurements, n)
        else:
            state = csl_step(engine, state, topo, measurements, n)
            locations_hat = {
                k: moments(state.beliefs[k].particles)[0][:2] for k in sensor_ids
            }
            tracked = dtt_step(
                state.target_beliefs, locations_hat, measurements, topo,
                engine._basis_for_step(n), engine.cfg.consensus, noise,
                stream("dtt", n), state.events)
            state = NetState(state.beliefs, tracked, state.events)

        for i, k in enumerate(sensor_ids):
            sensor_est[n - 1, i] = moments(state.beliefs[k].particles)[0][:2]
            target_est[n - 1, i] = moments(state.target_beliefs[k])[0][:2]
            sensor_truth[n - 1, i] = locations[k]
        target_truth[n - 1] = locations[TARGET_ID]
        for k in cfg.mobile_ids:
            gate.update(k, state.beliefs[k].particles)

    return RunRecord(run_idx, method, sensor_est, target_est, sensor_truth,
                     target_truth, state.events, digest.hexdigest())


def _run_args(args):
    return run_single(*args)


def run_experiment(cfg: ScenarioConfig, methods=METHODS, mode: str = "distributed-lc",
                   truth: dict | None = None, workers: int | None = None) -> list[RunRecord]:
    """All (run, method) records for the configured number of Monte Carlo runs."""
    if truth is None:
        truth = generate_truth(cfg, lambda node: substream(cfg.seed, "truth", node))
    jobs = [(cfg, truth, run_idx, method, mode)
            for run_idx in range(cfg.runs) for method in methods]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_args, jobs))
    else:
        records = [run_single(*job) for job in jobs]
    excluded = [r for r in records if not r.valid]
    for r in excluded:
        log.warning("run %s (%s) excluded: non-finite estimates", r.run, r.method)
    events = {}
    for r in records:
        for key, count in r.events.items():
            events[key] = events.get(key, 0) + count
    if events:
        log.info("filter events over %d records: %s", len(records), events)
    return records


def rmse_curves(records: list, cfg: ScenarioConfig) -> dict:
    """Per-method RMSE time series.

    Self-localization averages over mobile sensors (anchors know their
    locations); tracking averages every sensor's local target estimate.
    Runs with non-finite estimates are excluded (and reported by the runner).
    """
    sensor_ids = cfg.sensor_ids
    mobile_idx = [sensor_ids.index(k) for k in cfg.mobile_ids]
    curves = {}
    for method in sorted({r.method for r in records}):
        usable = [r for r in records if r.method == method and r.valid]
        if not usable:
            raise ValueError(f"no usable records for method {method!r}")
        self_sq = np.concatenate([
            np.sum((r.sensor_est[:, mobile_idx] - r.sensor_truth[:, mobile_idx]) ** 2,
                   axis=2)
            for r in usable
        ], axis=1)
        track_sq = np.concatenate([
            np.sum((r.target_est - r.target_truth[:, None, :]) ** 2, axis=2)
            for r in usable
        ], axis=1)
        curves[(method, "selfloc")] = np.sqrt(self_sq.mean(axis=1))
        curves[(method, "track")] = np.sqrt(track_sq.mean(axis=1))
    return curves


def export_csv(curves: dict, path, records: list | None = None,
               details_path=None) -> None:
    """Write `method,metric,n,rmse` rows (%.6f, LF line endings, UTF-8)."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["method", "metric", "n", "rmse"])
            for method, metric in sorted(curves):
                series = curves[(method, metric)]
                for n, value in enumerate(series, start=1):
                    writer.writerow([method, metric, n, f"{value:.6f}"])
    except OSError as exc:
        raise OSError(f"cannot write RMSE table to {path}: {exc}") from exc
    if details_path is not None and records is not None:
        _export_details(records, details_path)


def _export_details(records: list, path) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["run", "method", "n", "selfloc_rmse", "track_rmse",
                             "valid", "measurement_digest"])
            for r in sorted(records, key=lambda r: (r.run, r.method)):
                self_sq = np.sum((r.sensor_est - r.sensor_truth) ** 2, axis=2)
                track_sq = np.sum((r.target_est - r.target_truth[:, None, :]) ** 2, axis=2)
                for n in range(self_sq.shape[0]):
                    writer.writerow([
                        r.run, r.method, n + 1,
                        f"{np.sqrt(self_sq[n].mean()):.6f}",
                        f"{np.sqrt(track_sq[n].mean()):.6f}",
                        int(r.valid), r.measurement_digest,
                    ])
    except OSError as exc:
        raise OSError(f"cannot write run details to {path}: {exc}") from exc


def read_rmse_csv(path) -> dict:
    """Inverse of export_csv, for round-trip checks and replotting."""
    curves: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["method", "metric", "n", "rmse"]:
            raise ValueError(f"unexpected RMSE table header in {path}: {header}")
        rows: dict = {}
        for row in reader:
            rows.setdefault((row[0], row[1]), []).append((int(row[2]), float(row[3])))
    for key, pairs in rows.items():
        pairs.sort()
        curves[key] = np.array([v for _, v in pairs])
    return curves
