"""Square machining trajectories and the optimized/non-optimized comparison.

Each repetition draws one random start configuration and runs it twice:
reach the first trajectory pose then follow the square with the pose task
alone, and again (from the same start) with the dexterity and transmission
ratio tasks added below the pose task. Reaching with the extra tasks keeps
going after the pose is attained until the metrics stop improving.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ztrobot.chain import KinematicState, RobotModel, forward_kinematics
from ztrobot.errors import BadId, EmptyInput, ReachFailure, SingularJacobian
from ztrobot.mechanism import RigidTransform
from ztrobot.metrics import combined_score
from ztrobot.tpik import (
    Action,
    ControlObjective,
    PoseTask,
    SolverParams,
    StepContext,
    action_transition,
    dexterity_task,
    integrate_step,
    rtr_task,
    solve,
    velocity_bounds,
)

log = logging.getLogger(__name__)

SECTORS = ("a", "b", "c", "d")
AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class Face:
    """Plane holding one square: ``normal`` axis, side of the cube (+1/-1),
    in-plane axes ``u`` (sectors b, d) and ``v`` (sectors a, c), and the
    commanded tool attitude."""

    normal: str
    level: int
    u: str
    v: str
    tool_z: tuple
    tool_x: tuple

    @property
    def tool_rotation(self) -> np.ndarray:
        z = np.asarray(self.tool_z, dtype=float)
        z = z / np.linalg.norm(z)
        x = np.asarray(self.tool_x, dtype=float)
        x = x - (x @ z) * z
        x = x / np.linalg.norm(x)
        return np.column_stack([x, np.cross(z, x), z])


DEFAULT_FACES = {
    1: Face("z", -1, "x", "y", (0.0, 0.0, -1.0), (0.0, -1.0, 0.0)),
    2: Face("z", 1, "x", "y", (0.0, 0.0, -1.0), (0.0, -1.0, 0.0)),
    3: Face("y", -1, "x", "z", (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
    4: Face("y", 1, "x", "z", (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
}


@dataclass(frozen=True)
class TrajectoryParams:
    center: tuple = (0.0, 1.05, 0.45)
    side: float = 0.5
    speed: float = 0.002
    tangential_force: float = 60.0
    radial_force: float = 20.0
    radial_inward: bool = True
    steps: int = 201
    faces: dict = field(default_factory=lambda: dict(DEFAULT_FACES))


@dataclass(frozen=True, eq=False)
class TrajectorySpec:
    trajectory_id: int
    times: np.ndarray  # (N,) s
    positions: np.ndarray  # (N, 3) m
    rotation: np.ndarray  # (3, 3) constant tool attitude
    twists: np.ndarray  # (N, 6) [linear; angular]
    wrenches: np.ndarray  # (N, 6) [force; moment]
    sectors: tuple

    @property
    def steps(self) -> int:
        return len(self.times)

    def pose(self, k: int) -> RigidTransform:
        return RigidTransform(self.rotation, self.positions[k])


def build_trajectory(trajectory_id: int, params: TrajectoryParams | None = None) -> TrajectorySpec:
    """Square on one face of the workpiece cube, sampled by arc length.

    Sector a runs along +v, b along +u, c along -v and d along -u, starting
    from the (-u, -v) corner. Step k belongs to the sector of the motion from
    k to k+1; the last step closes the square and belongs to d.
    """
    params = params or TrajectoryParams()
    if trajectory_id not in params.faces:
        raise BadId(f"unknown trajectory id {trajectory_id}; known {sorted(params.faces)}")
    if params.steps < 2:
        raise ValueError("a trajectory needs at least two steps")
    face = params.faces[trajectory_id]
    h = params.side / 2.0
    n = params.steps
    corners = np.array([[-h, -h], [-h, h], [h, h], [h, -h]])
    dirs = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, -1.0], [-1.0, 0.0]])
    inward = np.array([[1.0, 0.0], [0.0, -1.0], [-1.0, 0.0], [0.0, 1.0]])
    if not params.radial_inward:
        inward = -inward

    k = np.arange(n)
    seg = np.minimum(4 * k // (n - 1), 3)
    dist = 4.0 * params.side * k / (n - 1) - seg * params.side
    uv = corners[seg] + dist[:, None] * dirs[seg]
    uv[-1] = corners[0]

    eu = np.eye(3)[AXES[face.u]]
    ev = np.eye(3)[AXES[face.v]]
    en = np.eye(3)[AXES[face.normal]]
    origin = np.asarray(params.center, dtype=float) + face.level * h * en
    positions = origin + uv[:, :1] * eu + uv[:, 1:] * ev

    direction = dirs[seg, :1] * eu + dirs[seg, 1:] * ev
    radial = inward[seg, :1] * eu + inward[seg, 1:] * ev
    twists = np.zeros((n, 6))
    twists[:, :3] = params.speed * direction
    wrenches = np.zeros((n, 6))
    wrenches[:, :3] = params.tangential_force * direction + params.radial_force * radial

    duration = 4.0 * params.side / params.speed
    times = duration * k / (n - 1)
    return TrajectorySpec(
        trajectory_id,
        times,
        positions,
        face.tool_rotation,
        twists,
        wrenches,
        tuple(SECTORS[s] for s in seg),
    )


@dataclass(frozen=True)
class MetricTaskSettings:
    lower_bound: float = 1.0
    buffer: float = 0.05
    gain: float = 0.5
    threshold: float = 0.5
    damping: float = 0.25

    def objective(self) -> ControlObjective:
        return ControlObjective.lower_bound(self.lower_bound, self.gain, self.buffer)


@dataclass(frozen=True)
class ExperimentSettings:
    """Everything besides the robot that shapes a comparison run."""

    trajectory: TrajectoryParams = field(default_factory=TrajectoryParams)
    solver: SolverParams = field(
        default_factory=lambda: SolverParams(threshold=0.05, damping=0.0025)
    )
    tracking_solver: SolverParams = field(
        default_factory=lambda: SolverParams(threshold=0.01, damping=1e-4)
    )
    levels: dict = field(
        default_factory=lambda: {
            "reach": {"pose": 1},
            "follow": {"velocity": 1},
            "reach_optimized": {"pose": 1, "dexterity": 2, "rtr": 2},
            "follow_optimized": {"velocity": 1, "dexterity": 2, "rtr": 2},
        }
    )
    pose_gain: float = 1.0
    velocity_gain: float = 5.0
    max_linear: float = 0.2
    max_angular: float = 0.5
    dexterity: MetricTaskSettings = field(default_factory=MetricTaskSettings)
    rtr: MetricTaskSettings = field(default_factory=MetricTaskSettings)
    dt: float = 0.1
    substeps: int = 5  # control cycles per trajectory sample
    weights: tuple = (0.5, 0.5)
    reach_tolerance: tuple = (1e-4, 1e-4)  # m, rad
    reach_max_steps: int = 1500
    optimized_reach_max_steps: int = 2500
    local_max_gradient: float = 1e-5
    local_max_gain: float = 1e-5
    local_max_patience: int = 10
    tracking_threshold: float = 1e-3
    transition_time: float = 0.0
    start_min_height: float = 0.0
    start_max_draws: int = 1000


def make_actions(settings: ExperimentSettings) -> dict:
    """The four actions from the task hierarchy in ``settings.levels``."""
    s = settings

    def task(name, priority):
        if name == "pose":
            return PoseTask("pose", priority, s.pose_gain, False, s.max_linear, s.max_angular)
        if name == "velocity":
            return PoseTask("velocity", priority, s.velocity_gain, True, s.max_linear, s.max_angular)
        if name == "dexterity":
            d = s.dexterity
            return dexterity_task(d.objective(), priority, (d.threshold, d.damping))
        if name == "rtr":
            d = s.rtr
            return rtr_task(d.objective(), priority, (d.threshold, d.damping))
        raise ValueError(f"unknown task {name!r}")

    return {
        action: Action(action, [task(name, p) for name, p in tasks.items()])
        for action, tasks in s.levels.items()
    }


@dataclass(eq=False)
class RunRecord:
    trajectory_id: int
    seed: int
    optimized: bool
    q0: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    eta: np.ndarray
    times: np.ndarray  # s, trajectory clock
    sectors: tuple
    position_error: np.ndarray
    rotation_error: np.ndarray
    solver_us: np.ndarray  # per tracking control cycle
    reach_steps: int
    reach_duration: float  # s
    reach_solver_us: float  # mean over reach steps
    local_max_reached: bool
    tracking_threshold: float = 1e-3

    @property
    def label(self) -> str:
        return "opt" if self.optimized else "raw"

    @property
    def start_eta(self) -> float:
        return float(self.eta[0])

    @property
    def mean_eta(self) -> float:
        return float(np.mean(self.eta))

    @property
    def final_pose_error(self) -> float:
        return float(self.position_error[-1])

    @property
    def flagged(self) -> bool:
        return bool(np.max(self.position_error) > self.tracking_threshold)

    @property
    def mean_step_us(self) -> float:
        n_track = len(self.solver_us)
        total = self.reach_solver_us * self.reach_steps + float(np.sum(self.solver_us))
        return total / max(self.reach_steps + n_track, 1)


def random_start(model: RobotModel, rng: np.random.Generator, settings: ExperimentSettings) -> np.ndarray:
    """Uniform motor angles, redrawn until the TCP is above the floor and the
    Jacobian is not singular."""
    for _ in range(settings.start_max_draws):
        q = rng.uniform(-np.pi, np.pi, model.n)
        state = KinematicState(model, q)
        if state.tcp.translation[2] < settings.start_min_height:
            continue
        if np.linalg.svd(state.weighted, compute_uv=False)[-1] < 1e-3:
            continue
        return q
    raise ReachFailure("no admissible random start configuration found")


def _errors(ctx: StepContext) -> tuple[float, float]:
    e = ctx.pose_error()
    return float(np.linalg.norm(e[:3])), float(np.linalg.norm(e[3:]))


def _reach(model, spec, settings, action, q, optimized):
    """Drive the TCP to the first trajectory pose.

    Without metric tasks this stops as soon as the pose is within tolerance.
    With them it keeps going until the metric gain per step or the projected
    metric gradients stay below their tolerances for ``local_max_patience``
    consecutive steps, or the step budget runs out.
    Returns (q, qdot, steps, mean solver seconds, local maximum confirmed).
    """
    target = spec.pose(0)
    q_dot = np.zeros(model.n)
    tol_p, tol_r = settings.reach_tolerance
    budget = settings.optimized_reach_max_steps if optimized else settings.reach_max_steps
    quiet = 0
    prev_eta = None
    elapsed = 0.0
    for step in range(budget + 1):
        ctx = StepContext(
            KinematicState(model, q),
            target,
            twist=spec.twists[0],
            wrench=spec.wrenches[0],
            bounds=velocity_bounds(model.limits, settings.dt, q_dot),
        )
        e_p, e_r = _errors(ctx)
        reached = e_p < tol_p and e_r < tol_r
        if reached and (not optimized or quiet >= settings.local_max_patience):
            return q, q_dot, step, elapsed / max(step, 1), optimized
        if step == budget:
            break
        t0 = time.perf_counter()
        out = solve(action, ctx, settings.solver)
        elapsed += time.perf_counter() - t0
        if optimized:
            eta = combined_score(ctx.dexterity[0], ctx.rtr, *settings.weights)
            flat = len(out.projected_norms) > 1 and np.all(
                out.projected_norms[1] < settings.local_max_gradient
            )
            stalled = prev_eta is not None and abs(eta - prev_eta) < settings.local_max_gain
            quiet = quiet + 1 if (flat or stalled) else 0
            prev_eta = eta
        q, q_dot = integrate_step(q, out.q_dot_ref, settings.dt, model.limits, q_dot)
    if reached:
        return q, q_dot, budget, elapsed / max(budget, 1), False
    raise ReachFailure(
        f"trajectory {spec.trajectory_id}: start pose not reached in {budget} steps "
        f"(errors {e_p:.2e} m, {e_r:.2e} rad)"
    )


def run_single(
    model: RobotModel,
    spec: TrajectorySpec,
    settings: ExperimentSettings,
    q0: np.ndarray,
    optimized: bool,
    seed: int = 0,
    actions: dict | None = None,
) -> RunRecord:
    actions = actions or make_actions(settings)
    reach = actions["reach_optimized" if optimized else "reach"]
    follow = actions["follow_optimized" if optimized else "follow"]
    q, q_dot, reach_steps, reach_us, local_max = _reach(
        model, spec, settings, reach, np.array(q0, dtype=float), optimized
    )
    n = spec.steps
    eta1 = np.empty(n)
    eta2 = np.empty(n)
    pos_err = np.empty(n)
    rot_err = np.empty(n)
    sub = settings.substeps
    solver_us = np.empty(n * sub)
    cycle = 0
    for k in range(n):
        nxt = spec.positions[min(k + 1, n - 1)]
        ff = np.zeros(6)
        ff[:3] = (nxt - spec.positions[k]) / (sub * settings.dt)
        for j in range(sub):
            target = RigidTransform(spec.rotation, spec.positions[k] + (j / sub) * (nxt - spec.positions[k]))
            ctx = StepContext(
                KinematicState(model, q),
                target,
                feedforward=ff,
                twist=spec.twists[k],
                wrench=spec.wrenches[k],
                bounds=velocity_bounds(model.limits, settings.dt, q_dot),
            )
            if j == 0:
                pos_err[k], rot_err[k] = _errors(ctx)
                eta1[k] = ctx.dexterity[0]
                eta2[k] = ctx.rtr
            elapsed = cycle * settings.dt
            t0 = time.perf_counter()
            if settings.transition_time > 0 and elapsed < settings.transition_time:
                out = action_transition(
                    reach, follow, elapsed, settings.transition_time, ctx, settings.tracking_solver
                )
            else:
                out = solve(follow, ctx, settings.tracking_solver)
            solver_us[cycle] = (time.perf_counter() - t0) * 1e6
            cycle += 1
            q, q_dot = integrate_step(q, out.q_dot_ref, settings.dt, model.limits, q_dot)
    w1, w2 = settings.weights
    return RunRecord(
        spec.trajectory_id,
        seed,
        optimized,
        np.array(q0, dtype=float),
        eta1,
        eta2,
        w1 * eta1 + w2 * eta2,
        spec.times,
        spec.sectors,
        pos_err,
        rot_err,
        solver_us,
        reach_steps,
        reach_steps * settings.dt,
        reach_us * 1e6,
        local_max,
        settings.tracking_threshold,
    )


@dataclass
class Failure:
    trajectory_id: int
    seed: int
    message: str


@dataclass
class Batch:
    records: list
    failures: list = field(default_factory=list)


def _run_repetition(job):
    model, spec, settings, seed, modes = job
    rng = np.random.default_rng([seed, spec.trajectory_id])
    actions = make_actions(settings)
    try:
        q0 = random_start(model, rng, settings)
        return [run_single(model, spec, settings, q0, opt, seed, actions) for opt in modes], None
    except (ReachFailure, SingularJacobian) as exc:
        log.warning("repetition %d on trajectory %d excluded: %s", seed, spec.trajectory_id, exc)
        return [], Failure(spec.trajectory_id, seed, str(exc))


def run_comparison(
    model: RobotModel,
    trajectories,
    n_repetitions: int,
    seed: int,
    settings: ExperimentSettings | None = None,
    workers: int | None = 1,
    optimize: str = "both",
) -> Batch:
    """Run every (trajectory, repetition) pair.

    Repetition ``j`` uses seed ``seed + j``; its random start is drawn from
    that seed and the trajectory id, so results do not depend on scheduling.
    ``optimize`` is ``"both"``, ``"on"`` or ``"off"``.
    """
    if n_repetitions < 1:
        raise ValueError("n_repetitions must be at least 1")
    settings = settings or ExperimentSettings()
    modes = {"both": (False, True), "on": (True,), "off": (False,)}[optimize]
    specs = [
        t if isinstance(t, TrajectorySpec) else build_trajectory(t, settings.trajectory)
        for t in trajectories
    ]
    jobs = [(model, spec, settings, seed + j, modes) for spec in specs for j in range(n_repetitions)]
    workers = workers or os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_repetition, jobs))
    else:
        results = [_run_repetition(job) for job in jobs]
    batch = Batch([], [])
    for records, failure in results:
        batch.records.extend(records)
        if failure is not None:
            batch.failures.append(failure)
    return batch


def improvement(opt: float, raw: float) -> float:
    """Percentage change from ``raw`` to ``opt``."""
    return 100.0 * (opt - raw) / raw


def describe(values) -> dict:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"n": 0}
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {
        "n": int(v.size),
        "min": float(v.min()),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "max": float(v.max()),
        "mean": float(v.mean()),
        "std": float(v.std()),
    }


def sector_ratio(records, metric: str = "eta2") -> float | None:
    """Percent by which the metric's mean in sectors b, d exceeds a, c."""
    along_u, along_v = [], []
    for r in records:
        values = getattr(r, metric)
        sectors = np.array(r.sectors)
        along_u.append(values[np.isin(sectors, ("b", "d"))])
        along_v.append(values[np.isin(sectors, ("a", "c"))])
    if not records:
        return None
    mu = np.mean(np.concatenate(along_u))
    mv = np.mean(np.concatenate(along_v))
    return float(100.0 * (mu - mv) / mv)


def pairs(records) -> list[tuple[RunRecord, RunRecord]]:
    """(raw, optimized) records sharing trajectory and seed."""
    raw = {(r.trajectory_id, r.seed): r for r in records if not r.optimized}
    opt = {(r.trajectory_id, r.seed): r for r in records if r.optimized}
    return [(raw[k], opt[k]) for k in sorted(raw.keys() & opt.keys())]


def summarize(records, failures=()) -> dict:
    if isinstance(records, Batch):
        records, failures = records.records, records.failures
    if not records:
        raise EmptyInput("no run records to summarize")
    out = {"trajectories": {}, "failures": len(failures)}
    for tid in sorted({r.trajectory_id for r in records}):
        mine = [r for r in records if r.trajectory_id == tid]
        entry = {"failures": sum(f.trajectory_id == tid for f in failures)}
        for label, group in (("raw", [r for r in mine if not r.optimized]), ("opt", [r for r in mine if r.optimized])):
            if not group:
                continue
            entry[label] = {
                "runs": len(group),
                "start_eta": describe([r.start_eta for r in group]),
                "mean_eta": describe([r.mean_eta for r in group]),
                "mean_eta1": describe([np.mean(r.eta1) for r in group]),
                "mean_eta2": describe([np.mean(r.eta2) for r in group]),
                "rtr_sector_gap_percent": sector_ratio(group),
                "reach_duration_s": describe([r.reach_duration for r in group]),
                "mean_step_us": float(np.mean([r.mean_step_us for r in group])),
                "mean_tracking_step_us": float(np.mean([np.mean(r.solver_us) for r in group])),
                "flagged_runs": int(sum(r.flagged for r in group)),
                "local_max_confirmed": int(sum(r.local_max_reached for r in group)),
                "max_position_error": float(max(np.max(r.position_error) for r in group)),
            }
        matched = pairs(mine)
        if matched:
            start = [improvement(o.start_eta, r.start_eta) for r, o in matched]
            mean = [improvement(o.mean_eta, r.mean_eta) for r, o in matched]
            d1 = [improvement(np.mean(o.eta1), np.mean(r.eta1)) for r, o in matched]
            d2 = [improvement(np.mean(o.eta2), np.mean(r.eta2)) for r, o in matched]
            entry["improvement"] = {
                "pairs": len(matched),
                "start_eta": describe(start),
                "mean_eta": describe(mean),
                "mean_eta1": describe(d1),
                "mean_eta2": describe(d2),
                "negative_fraction_start_eta": float(np.mean(np.array(start) < 0)),
                "negative_fraction_mean_eta": float(np.mean(np.array(mean) < 0)),
                "reach_time_increase_percent": improvement(
                    np.mean([o.reach_duration for _, o in matched]),
                    np.mean([r.reach_duration for r, _ in matched]),
                ),
            }
        out["trajectories"][str(tid)] = entry
    return out


def straight_height(model: RobotModel) -> float:
    return float(forward_kinematics(model, model.straight()).translation[2])
