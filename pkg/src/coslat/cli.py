"""Command-line interface: simulate, validate-config, replay."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness, scenario
from .seeding import substream

log = logging.getLogger("coslat")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coslat",
        description="Cooperative simultaneous localization and tracking simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    sim.add_argument("--config", type=Path, default=None,
                     help="JSON scenario configuration (default: built-in layout)")
    sim.add_argument("--scenario", type=int, choices=(1, 2), default=None,
                     help="scenario id; overrides the configuration file")
    sim.add_argument("--runs", type=int, default=None, help="Monte Carlo runs")
    sim.add_argument("--seed", type=int, default=None, help="experiment seed")
    sim.add_argument("--method", choices=("coslat", "baseline", "both"), default="both")
    sim.add_argument("--mode", choices=("distributed-lc", "centralized", "exact-extrinsic"),
                     default="distributed-lc")
    sim.add_argument("--out", type=Path, required=True, help="output directory")
    sim.add_argument("--workers", type=int, default=None,
                     help="parallel worker processes (default: sequential)")
    sim.add_argument("--details", action="store_true",
                     help="also write per-run detail rows to runs.csv")
    sim.add_argument("--truth", type=Path, default=None,
                     help="reuse a cached trajectory table instead of generating one")

    val = sub.add_parser("validate-config", help="check a configuration file")
    val.add_argument("--config", type=Path, required=True)

    rep = sub.add_parser("replay", help="simulate on a previously saved trajectory table")
    rep.add_argument("--truth", type=Path, required=True)
    rep.add_argument("--config", type=Path, default=None)
    rep.add_argument("--scenario", type=int, choices=(1, 2), default=None)
    rep.add_argument("--runs", type=int, default=None)
    rep.add_argument("--seed", type=int, default=None)
    rep.add_argument("--method", choices=("coslat", "baseline", "both"), default="both")
    rep.add_argument("--mode", choices=("distributed-lc", "centralized", "exact-extrinsic"),
                     default="distributed-lc")
    rep.add_argument("--out", type=Path, required=True)
    rep.add_argument("--workers", type=int, default=None)
    rep.add_argument("--details", action="store_true")
    return parser


def _load_scenario(args) -> scenario.ScenarioConfig:
    if args.config is not None:
        cfg = scenario.load_config(args.config)
        if args.scenario is not None and args.scenario != cfg.scenario:
            cfg = scenario.default_config(args.scenario, **_carried_overrides(cfg))
    else:
        cfg = scenario.default_config(args.scenario or 2)
    overrides = {}
    if args.runs is not None:
        overrides["runs"] = args.runs
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    return cfg


def _carried_overrides(cfg: scenario.ScenarioConfig) -> dict:
    keys = ("comm_range", "sigma_v2", "sigma_u2", "steps", "runs", "seed", "particles",
            "bp_iterations", "consensus_iterations", "basis_degree", "basis_scale",
            "kernel_variance", "gate_threshold", "censor_variance")
    return {k: getattr(cfg, k) for k in keys}


def _simulate(args) -> int:
    cfg = _load_scenario(args)
    problems = scenario.validate_config(cfg)
    if problems:
        for p in problems:
            log.error("config: %s", p)
        return 2
    methods = ("coslat", "baseline") if args.method == "both" else (args.method,)
    truth = None
    if getattr(args, "truth", None) is not None:
        try:
            truth = scenario.load_truth(args.truth)
        except (OSError, ValueError) as exc:
            log.error("%s", exc)
            return 2
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        if truth is None:
            truth = scenario.generate_truth(
                cfg, lambda node: substream(cfg.seed, "truth", node))
        scenario.save_truth(truth, args.out / "truth.csv")
        records = harness.run_experiment(cfg, methods=methods, mode=args.mode,
                                         truth=truth, workers=args.workers)
        curves = harness.rmse_curves(records, cfg)
        details = args.out / "runs.csv" if args.details else None
        harness.export_csv(curves, args.out / "rmse.csv", records, details)
        scenario.save_config(cfg, args.out / "config.json")
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1
    for (method, metric), series in sorted(curves.items()):
        log.info("%s %s: mean RMSE %.3f m over n=1..%d", method, metric,
                 series.mean(), len(series))
    log.info("wrote %s", args.out / "rmse.csv")
    return 0


def _validate(args) -> int:
    try:
        cfg = scenario.load_config(args.config)
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return 2
    problems = scenario.validate_config(cfg)
    if problems:
        for p in problems:
            log.error("config: %s", p)
        return 2
    log.info("configuration OK: scenario %d, %d nodes, %d steps, %d runs",
             cfg.scenario, len(cfg.nodes), cfg.steps, cfg.runs)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        return _simulate(args)
    if args.command == "validate-config":
        return _validate(args)
    if args.command == "replay":
        return _simulate(args)
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
