"""Files produced by a comparison run: per-run CSVs, a JSON summary and figures."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ztrobot.experiment import Batch, RunRecord, improvement, pairs  # noqa: E402

log = logging.getLogger(__name__)

RUN_COLUMNS = ("step", "time", "eta1", "eta2", "eta", "sector", "position_error", "rotation_error")
SECTOR_COLORS = {"a": "#f2f2f2", "b": "#dde8f5", "c": "#f2f2f2", "d": "#dde8f5"}


def _num(x: float) -> str:
    return f"{x:.12g}"


def ensure_dir(path) -> Path:
    out = Path(path)
    if not out.exists():
        log.warning("output directory %s does not exist; creating it", out)
        out.mkdir(parents=True)
    return out


def run_filename(record: RunRecord, suffix: str = "") -> str:
    return f"traj{record.trajectory_id}_rep{record.seed}_{record.label}{suffix}.csv"


def write_run_csv(record: RunRecord, directory) -> Path:
    """Per-step metrics; deterministic for a given configuration and seed."""
    path = Path(directory) / run_filename(record)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for k in range(len(record.eta)):
            w.writerow(
                [
                    k,
                    _num(record.times[k]),
                    _num(record.eta1[k]),
                    _num(record.eta2[k]),
                    _num(record.eta[k]),
                    record.sectors[k],
                    _num(record.position_error[k]),
                    _num(record.rotation_error[k]),
                ]
            )
    return path


def write_timing_csv(record: RunRecord, directory) -> Path:
    """Solver wall time per tracking control cycle (varies run to run)."""
    path = Path(directory) / run_filename(record, "_timing")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("cycle", "solver_us"))
        for k, us in enumerate(record.solver_us):
            w.writerow((k, f"{us:.1f}"))
    return path


def write_summary(summary: dict, directory, name: str = "summary.json") -> Path:
    path = Path(directory) / name
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _box(ax, groups, labels, ylabel):
    ax.boxplot(groups, tick_labels=labels, showmeans=True)
    ax.set_ylabel(ylabel)
    ax.grid(axis="y", alpha=0.3)


def _by_trajectory(records):
    ids = sorted({r.trajectory_id for r in records})
    return ids, {t: [r for r in records if r.trajectory_id == t] for t in ids}


def plot_distributions(records, path) -> Path:
    """Box plots of start-pose and on-trajectory mean score, raw vs optimized."""
    ids, groups = _by_trajectory(records)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, attr, ylabel in ((axes[0], "start_eta", "start-pose score"), (axes[1], "mean_eta", "mean score on path")):
        data, labels = [], []
        for t in ids:
            for opt in (False, True):
                vals = [getattr(r, attr) for r in groups[t] if r.optimized == opt]
                if vals:
                    data.append(vals)
                    labels.append(f"T{t} {'opt' if opt else 'raw'}")
        _box(ax, data, labels, ylabel)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_improvements(records, path) -> Path:
    """Per-pair percentage improvements of each score."""
    ids, groups = _by_trajectory(records)
    keys = (
        ("start", lambda r: r.start_eta),
        ("mean", lambda r: r.mean_eta),
        ("dexterity", lambda r: float(np.mean(r.eta1))),
        ("RTR", lambda r: float(np.mean(r.eta2))),
    )
    fig, axes = plt.subplots(1, len(ids), figsize=(5 * len(ids), 4), squeeze=False)
    for ax, t in zip(axes[0], ids):
        matched = pairs(groups[t])
        data = [[improvement(f(o), f(r)) for r, o in matched] for _, f in keys]
        if matched:
            _box(ax, data, [k for k, _ in keys], "improvement (%)")
        ax.axhline(0.0, color="k", lw=0.8)
        ax.set_title(f"trajectory {t}, {len(matched)} pairs")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_profile(raw: RunRecord, opt: RunRecord, path) -> Path:
    """Dexterity and RTR along the path for one pair, sectors shaded."""
    fig, axes = plt.subplots(2, 1, figsize=(9, 5), sharex=True)
    steps = np.arange(len(raw.eta))
    sectors = np.array(raw.sectors)
    for ax, attr, ylabel in ((axes[0], "eta1", "dexterity"), (axes[1], "eta2", "RTR")):
        start = 0
        for k in range(1, len(sectors) + 1):
            if k == len(sectors) or sectors[k] != sectors[start]:
                ax.axvspan(start, k, color=SECTOR_COLORS[sectors[start]], lw=0)
                ax.text((start + k) / 2, 1.0, sectors[start], transform=ax.get_xaxis_transform(), ha="center", va="bottom")
                start = k
        ax.plot(steps, getattr(raw, attr), label="non-optimized")
        ax.plot(steps, getattr(opt, attr), label="optimized")
        ax.set_ylabel(ylabel)
    axes[0].legend(loc="lower right")
    axes[1].set_xlabel("trajectory step")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_workspace(points: np.ndarray, path, mode: str) -> Path:
    """Vertical section of a workspace sample: radial distance vs height."""
    fig, ax = plt.subplots(figsize=(5, 5))
    if mode == "module":
        x, z = points[:, 4], points[:, 6]
        ax.scatter(x, z, s=2, c=np.degrees(points[:, 3]), cmap="viridis")
        ax.set_xlabel("x (m)")
    else:
        band = np.abs(points[:, 1]) < 0.05
        ax.scatter(points[band, 0], points[band, 2], s=1)
        ax.set_xlabel("x (m), |y| < 0.05 m")
    ax.set_ylabel("z (m)")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def write_batch(batch: Batch, summary: dict, directory) -> list[Path]:
    """All files for a batch: CSVs, timing sidecars, summary and figures."""
    out = ensure_dir(directory)
    written = []
    for rec in sorted(batch.records, key=lambda r: (r.trajectory_id, r.seed, r.optimized)):
        written.append(write_run_csv(rec, out))
        written.append(write_timing_csv(rec, out))
    written.append(write_summary(summary, out))
    if batch.records:
        written.append(plot_distributions(batch.records, out / "scores.png"))
        if any(r.optimized for r in batch.records) and any(not r.optimized for r in batch.records):
            written.append(plot_improvements(batch.records, out / "improvements.png"))
            ids, groups = _by_trajectory(batch.records)
            for t in ids:
                matched = pairs(groups[t])
                if matched:
                    written.append(plot_profile(*matched[0], out / f"profile_traj{t}.png"))
    return written
