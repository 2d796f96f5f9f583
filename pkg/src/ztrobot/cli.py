"""Command-line interface: ``ztrobot fk | run | workspace``.

Exit codes: 0 on success, 2 for configuration or argument errors, 3 when the
computation itself fails.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from ztrobot import __version__
from ztrobot.chain import Module, forward_kinematics, sample_workspace
from ztrobot.config import ExperimentConfig, load_config
from ztrobot.errors import ConfigError, DimensionMismatch, ZTRobotError
from ztrobot.experiment import run_comparison, summarize
from ztrobot.mechanism import module_workspace

log = logging.getLogger("ztrobot")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    """Bad command-line input; reported with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _parse_q(text: str, n: int) -> np.ndarray:
    try:
        values = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise UsageError(f"malformed joint vector {text!r}: {exc}") from exc
    if len(values) != n:
        raise UsageError(f"joint vector has {len(values)} values, the robot has {n} joints")
    if not np.all(np.isfinite(values)):
        raise UsageError("joint values must be finite")
    return np.array(values)


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "paper_scale", False):
        cfg = cfg.at_paper_scale()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "out", None) is not None:
        cfg = replace(cfg, output=args.out)
    return cfg


def cmd_fk(args) -> int:
    cfg = _config(args)
    model = cfg.model
    q = model.straight() if args.q is None else _parse_q(args.q, model.n)
    tcp = forward_kinematics(model, q)
    np.set_printoptions(precision=9, suppress=True)
    print("position:", " ".join(f"{v:.9f}" for v in tcp.translation))
    print("rotation:")
    for row in tcp.rotation:
        print("  " + " ".join(f"{v:+.9f}" for v in row))
    return EXIT_OK


def _trajectory_ids(text: str | None, default) -> tuple:
    if text is None:
        return tuple(default)
    if text == "all":
        return (1, 2, 3, 4)
    try:
        tid = int(text)
    except ValueError:
        raise UsageError(f"--trajectory must be 1..4 or 'all', got {text!r}") from None
    if tid not in (1, 2, 3, 4):
        raise UsageError(f"--trajectory must be 1..4 or 'all', got {text!r}")
    return (tid,)


def cmd_run(args) -> int:
    from ztrobot import report

    cfg = _config(args)
    settings = cfg.settings
    if args.steps is not None:
        if args.steps < 2:
            raise UsageError("--steps must be at least 2")
        settings = replace(settings, trajectory=replace(settings.trajectory, steps=args.steps))
    reps = args.reps if args.reps is not None else cfg.repetitions
    if reps < 1:
        raise UsageError("--reps must be at least 1")
    trajectories = _trajectory_ids(args.trajectory, cfg.trajectories)
    optimize = args.optimize or cfg.optimize
    workers = args.workers if args.workers is not None else cfg.workers
    if workers is not None and workers < 1:
        raise UsageError("--workers must be at least 1")

    out = report.ensure_dir(cfg.output)
    log.info(
        "running trajectories %s, %d repetitions from seed %d, %d steps, optimize=%s",
        list(trajectories), reps, cfg.seed, settings.trajectory.steps, optimize,
    )
    t0 = time.perf_counter()
    batch = run_comparison(cfg.model, trajectories, reps, cfg.seed, settings, workers, optimize)
    elapsed = time.perf_counter() - t0
    if not batch.records:
        log.error("every repetition failed to reach its start pose (%d failures)", len(batch.failures))
        return EXIT_RUNTIME
    summary = summarize(batch)
    steps_us = [r.mean_step_us for r in batch.records]
    summary["run"] = {
        "seed": cfg.seed,
        "repetitions": reps,
        "trajectories": list(trajectories),
        "steps": settings.trajectory.steps,
        "substeps": settings.substeps,
        "dt": settings.dt,
        "optimize": optimize,
        "wall_time_s": elapsed,
        "mean_step_us": float(np.mean(steps_us)),
        "failures": [vars(f) for f in batch.failures],
    }
    written = report.write_batch(batch, summary, out)
    log.info("wrote %d files to %s in %.1f s", len(written), out, elapsed)
    for tid, entry in summary["trajectories"].items():
        imp = entry.get("improvement")
        if imp:
            print(
                f"trajectory {tid}: {imp['pairs']} pairs, start score {imp['start_eta']['mean']:+.1f}% "
                f"(median {imp['start_eta']['median']:+.1f}%), path mean {imp['mean_eta']['mean']:+.1f}%, "
                f"failures {entry['failures']}"
            )
        else:
            print(f"trajectory {tid}: {sum(1 for _ in entry)} groups, failures {entry['failures']}")
    print(f"mean solver step {summary['run']['mean_step_us']:.0f} us; results in {out}")
    return EXIT_OK


def cmd_workspace(args) -> int:
    from ztrobot import report

    cfg = _config(args)
    ws = cfg.workspace
    mode = args.mode or ws.get("mode", "robot")
    out = report.ensure_dir(cfg.output)
    if mode == "module":
        grid = args.grid if args.grid is not None else ws.get("grid", 50)
        if grid < 2:
            raise UsageError("--grid must be at least 2")
        modules = [s for s in cfg.model.segments if isinstance(s, Module)]
        if not modules:
            raise ConfigError("the configured robot has no module")
        points = module_workspace(modules[0].params, grid)
        header = ("q1", "q2", "phi", "theta", "x", "y", "z")
    else:
        samples = args.samples if args.samples is not None else ws.get("samples", 20000)
        if samples < 1:
            raise UsageError("--samples must be at least 1")
        points = sample_workspace(cfg.model, samples, np.random.default_rng(cfg.seed))
        header = ("x", "y", "z")
    path = out / f"workspace_{mode}.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([f"{v:.12g}" for v in row] for row in points)
    report.plot_workspace(points, out / f"workspace_{mode}.png", mode)
    print(f"{len(points)} points written to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ztrobot", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML config (merged over its preset; default: rp120)")
    common.add_argument("--seed", type=int, help="base random seed")
    common.add_argument("--out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fk = sub.add_parser("fk", parents=[common], help="print the TCP pose for a joint vector")
    fk.add_argument("--q", help="joint values in radians, comma or space separated (default: straight)")
    fk.set_defaults(func=cmd_fk)

    run = sub.add_parser("run", parents=[common], help="optimized vs non-optimized comparison")
    run.add_argument("--reps", type=int, help="repetitions per trajectory")
    run.add_argument("--steps", type=int, help="samples per trajectory")
    run.add_argument("--optimize", choices=("on", "off", "both"))
    run.add_argument("--trajectory", help="1..4 or all")
    run.add_argument("--workers", type=int, help="parallel worker processes")
    run.add_argument("--paper-scale", action="store_true", help="2001 steps, 100 repetitions, all trajectories")
    run.set_defaults(func=cmd_run)

    ws = sub.add_parser("workspace", parents=[common], help="sample the module or robot workspace")
    ws.add_argument("--mode", choices=("module", "robot"))
    ws.add_argument("--grid", type=int, help="module mode: grid points per motor")
    ws.add_argument("--samples", type=int, help="robot mode: random configurations")
    ws.set_defaults(func=cmd_workspace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"ztrobot: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, ConfigError, DimensionMismatch) as exc:
        print(f"ztrobot: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ZTRobotError, ArithmeticError, OSError) as exc:
        print(f"ztrobot: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
