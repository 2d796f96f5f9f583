"""Acceptance checks, one per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from oracles import numeric_jacobian, two_stage_lsq  # noqa: E402
from ztrobot.chain import KinematicState, forward_kinematics  # noqa: E402
from ztrobot.cli import main as cli_main  # noqa: E402
from ztrobot.config import load_config  # noqa: E402
from ztrobot.experiment import run_comparison, summarize  # noqa: E402
from ztrobot.mechanism import (  # noqa: E402
    ActuatorAngles,
    ModuleParams,
    TiltAzimuth,
    actuator_to_tilt_azimuth,
    module_jacobians,
    module_transform,
    module_workspace,
    rotation_vector,
    tilt_azimuth_to_actuator,
)
from ztrobot.metrics import dexterity, dexterity_gradient, rtr, rtr_gradient  # noqa: E402
from ztrobot.tpik import Action, JointRangeTask, StepContext, TaskRows, solve  # noqa: E402

RESULTS: list[str] = []
P = ModuleParams()
TWIST = np.array([0.002, 0.0, 0.0, 0.0, 0.0, 0.0])
WRENCH = np.array([60.0, 20.0, 0.0, 0.0, 0.0, 0.0])


def record(name: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    return ok


def _robot():
    return load_config().model


# criteria


def check_geometry():
    model = _robot()
    z = forward_kinematics(model, model.straight()).translation[2]
    tilt = np.abs(module_workspace(P, 201)[:, 3]).max()
    ok = abs(z - 1.9) <= 1e-9 and abs(tilt - np.pi / 6) <= 1e-3 and tilt <= np.pi / 6 + 1e-12
    return record("geometry closure", ok, f"TCP height {z:.12f} m, max module tilt {tilt:.6f} rad (pi/6 = {np.pi / 6:.6f})")


def check_round_trips():
    grid = np.linspace(-np.pi, np.pi, 50)
    worst = 0.0
    for q1 in grid:
        for q2 in grid:
            a = actuator_to_tilt_azimuth(ActuatorAngles(q1, q2), P)
            target = module_transform(a, P).matrix
            for sol in tilt_azimuth_to_actuator(a, P):
                got = module_transform(actuator_to_tilt_azimuth(sol, P), P).matrix
                worst = max(worst, np.abs(got - target).max())
    rng = np.random.default_rng(1)
    torsion = max(
        abs(rotation_vector(module_transform(TiltAzimuth(phi, th), P).rotation)[2])
        for phi, th in zip(rng.uniform(-np.pi, np.pi, 1000), rng.uniform(-P.max_tilt, P.max_tilt, 1000))
    )
    ok = worst < 1e-9 and torsion < 1e-12
    return record("model round-trips", ok, f"max pose error {worst:.2e} on 50x50 grid, max axis z {torsion:.2e} over 1000 samples")


def _fd_metric(model, q, f, h=1e-6):
    g = np.zeros(model.n)
    for i in range(model.n):
        dq = np.zeros(model.n)
        dq[i] = h
        g[i] = (f(KinematicState(model, q + dq).weighted) - f(KinematicState(model, q - dq).weighted)) / (2 * h)
    return g


def check_jacobians():
    rng = np.random.default_rng(2)
    model = _robot()
    h = 1e-6
    e_mod = 0.0
    count = 0
    while count < 200:
        q = rng.uniform(-np.pi, np.pi, 2)
        if abs(actuator_to_tilt_azimuth(ActuatorAngles(*q), P).theta) < 1e-3:
            continue
        j = module_jacobians(ActuatorAngles(*q), P).j
        num = np.zeros((6, 2))
        r0 = module_transform(actuator_to_tilt_azimuth(ActuatorAngles(*q), P), P).rotation
        for i in range(2):
            d = np.zeros(2)
            d[i] = h
            a = module_transform(actuator_to_tilt_azimuth(ActuatorAngles(*(q + d)), P), P)
            b = module_transform(actuator_to_tilt_azimuth(ActuatorAngles(*(q - d)), P), P)
            num[:3, i] = (a.translation - b.translation) / (2 * h)
            w = (a.rotation - b.rotation) / (2 * h) @ r0.T
            num[3:, i] = [w[2, 1], w[0, 2], w[1, 0]]
        e_mod = max(e_mod, np.linalg.norm(j - num) / np.linalg.norm(num))
        count += 1
    e_chain = e_dex = e_rtr = 0.0
    count = 0
    while count < 200:
        q = rng.uniform(-np.pi, np.pi, model.n)
        s = KinematicState(model, q)
        if np.linalg.svd(s.weighted, compute_uv=False)[-1] < 1e-2:
            continue
        num = numeric_jacobian(model, q)
        e_chain = max(e_chain, np.linalg.norm(s.jacobian - num) / np.linalg.norm(num))
        g = dexterity_gradient(s.weighted, s.partials)
        n = _fd_metric(model, q, lambda jw: dexterity(jw)[0])
        e_dex = max(e_dex, np.linalg.norm(g - n) / np.linalg.norm(n))
        g = rtr_gradient(s.weighted, s.partials, TWIST, WRENCH, model.characteristic_length)
        n = _fd_metric(model, q, lambda jw: rtr(jw, TWIST, WRENCH, model.characteristic_length))
        e_rtr = max(e_rtr, np.linalg.norm(g - n) / max(np.linalg.norm(n), 1e-12))
        count += 1
    ok = e_mod < 1e-5 and e_chain < 1e-5 and e_dex < 1e-4 and e_rtr < 1e-3
    return record(
        "Jacobian oracles",
        ok,
        f"max relative error over 200 configs: module {e_mod:.1e}, chain {e_chain:.1e}, dexterity grad {e_dex:.1e}, RTR grad {e_rtr:.1e}",
    )


class _Rows:
    def __init__(self, j, x, priority=1):
        self.jacobian, self.reference, self.priority, self.name = j, x, priority, f"rows{priority}"

    def rows(self, ctx):
        return TaskRows(self.jacobian, self.reference, np.ones(len(self.reference)))


def check_priority():
    from ztrobot.chain import FixedLink, Revolute, RobotModel

    rng = np.random.default_rng(3)
    seg = []
    for length in (1.0, 0.8, 0.6):
        seg += [Revolute(), FixedLink(length, (1.0, 0.0, 0.0))]
    planar = RobotModel(tuple(seg), characteristic_length=1.0)
    robot = _robot()
    worst_res = worst_oracle = worst_inactive = 0.0
    instances = 0
    for model, rows in ((planar, 2), (robot, 6)):
        done = 0
        while done < 100:
            q = rng.uniform(-np.pi, np.pi, model.n)
            state = KinematicState(model, q)
            j1 = state.jacobian[:rows]
            if np.linalg.svd(j1, compute_uv=False)[-1] < 1e-2:
                continue
            x1, x2 = rng.normal(size=rows), rng.normal(size=model.n)
            j2 = rng.normal(size=(model.n, model.n))
            ctx = StepContext(state)
            alone = solve(Action("1", [_Rows(j1, x1)]), ctx).q_dot_ref
            both = solve(Action("2", [_Rows(j1, x1), _Rows(j2, x2, 2)]), ctx).q_dot_ref
            worst_res = max(worst_res, np.abs(j1 @ both - j1 @ alone).max())
            worst_oracle = max(worst_oracle, np.abs(both - two_stage_lsq(j1, x1, j2, x2)).max())
            limits = JointRangeTask(tuple(range(model.n)), (-10.0,) * model.n, (10.0,) * model.n, priority=2)
            with_inactive = solve(Action("3", [_Rows(j1, x1), limits]), ctx).q_dot_ref
            worst_inactive = max(worst_inactive, np.abs(with_inactive - alone).max())
            done += 1
            instances += 1
    ok = worst_res < 1e-9 and worst_inactive < 1e-12
    return record(
        "priority soundness",
        ok,
        f"{instances} instances: level-1 residual change {worst_res:.1e}, inactive-task change {worst_inactive:.1e}, "
        f"two-stage oracle gap {worst_oracle:.1e}",
    )


_BATCH = {}


def comparison_batch():
    """Trajectories 1 and 2, desk scale, 20 pairs each (computed once)."""
    if "batch" not in _BATCH:
        cfg = load_config()
        t0 = time.perf_counter()
        batch = run_comparison(cfg.model, [1, 2], 20, cfg.seed, cfg.settings, workers=1)
        _BATCH["batch"] = batch
        _BATCH["summary"] = summarize(batch)
        _BATCH["elapsed"] = time.perf_counter() - t0
    return _BATCH["batch"], _BATCH["summary"]


def check_statistics():
    batch, summary = comparison_batch()
    t1 = summary["trajectories"]["1"]
    imp = t1["improvement"]
    n_pairs = imp["pairs"]
    a = imp["start_eta"]["mean"] > 0 and imp["start_eta"]["median"] > 10
    b = imp["mean_eta"]["mean"] > 0
    c = imp["mean_eta1"]["mean"] > 0 and imp["mean_eta2"]["mean"] > 0
    d = imp["negative_fraction_start_eta"] <= 0.2 and imp["negative_fraction_mean_eta"] <= 0.2
    ok = a and b and c and d and n_pairs >= 1
    return record(
        "score-statistics reproduction",
        ok,
        f"trajectory 1, {n_pairs} pairs ({t1['failures']} excluded): "
        f"(a) start score mean {imp['start_eta']['mean']:+.1f}% median {imp['start_eta']['median']:+.1f}% "
        f"(b) path mean {imp['mean_eta']['mean']:+.1f}% "
        f"(c) dexterity {imp['mean_eta1']['mean']:+.1f}% RTR {imp['mean_eta2']['mean']:+.1f}% "
        f"(d) negative pairs {imp['negative_fraction_start_eta']:.0%} start / {imp['negative_fraction_mean_eta']:.0%} path",
    )


def check_sectors():
    _, summary = comparison_batch()
    gaps = {t: summary["trajectories"][t]["raw"]["rtr_sector_gap_percent"] for t in ("1", "2")}
    ok = all(g > 0 for g in gaps.values())
    return record(
        "sectoral RTR asymmetry",
        ok,
        ", ".join(f"trajectory {t}: RTR in b,d exceeds a,c by {g:+.1f}%" for t, g in gaps.items()),
    )


def check_performance():
    batch, _ = comparison_batch()
    raw = np.mean([r.mean_step_us for r in batch.records if not r.optimized])
    opt = np.mean([r.mean_step_us for r in batch.records if r.optimized])
    overall = np.mean([r.mean_step_us for r in batch.records])
    ok = overall < 5000 and opt < 5000
    return record(
        "performance envelope",
        ok,
        f"mean solver step {overall:.0f} us (non-optimized {raw:.0f} us, optimized {opt:.0f} us) at 21 DOF",
    )


def check_determinism(tmp: Path):
    args = ["run", "--reps", "1", "--trajectory", "1", "--seed", "11", "--workers", "1"]
    outs = [tmp / "first", tmp / "second"]
    codes = [cli_main(args + ["--out", str(o)]) for o in outs]
    names = sorted(p.name for p in outs[0].glob("traj*_rep*_???.csv"))
    same = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    ok = codes == [0, 0] and len(names) == 2 and same
    return record("determinism", ok, f"{len(names)} run CSVs compared byte for byte: {'identical' if same else 'different'}")


# pytest entry points


def test_geometry_closure():
    assert check_geometry()


def test_model_round_trips():
    assert check_round_trips()


def test_jacobian_oracles():
    assert check_jacobians()


def test_priority_soundness():
    assert check_priority()


@pytest.mark.slow
def test_score_statistics():
    assert check_statistics()


@pytest.mark.slow
def test_sectoral_rtr_asymmetry():
    assert check_sectors()


@pytest.mark.slow
def test_performance_envelope():
    assert check_performance()


def test_determinism(tmp_path):
    assert check_determinism(tmp_path)


if __name__ == "__main__":
    import tempfile

    checks = [check_geometry, check_round_trips, check_jacobians, check_priority, check_statistics, check_sectors, check_performance]
    results = [c() for c in checks]
    with tempfile.TemporaryDirectory() as d:
        results.append(check_determinism(Path(d)))
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
