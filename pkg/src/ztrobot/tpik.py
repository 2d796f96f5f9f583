"""Task-priority inverse kinematics with smoothly activated objectives.

Each priority level minimizes the activation-weighted error between its
reference rates and the joint-velocity image ``J qdot`` over the solutions
left free by the levels above it. Levels are solved with an SVD-based damped
pseudo-inverse of ``sqrt(A) J Q`` (``Q`` the accumulated null-space
projector), so a row whose activation fades to zero stops consuming degrees
of freedom continuously. Damping only acts on singular values under a
threshold, which keeps the projection exact for well-conditioned levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import groupby
from typing import Callable, Protocol

import numpy as np

from ztrobot.chain import JointLimits, KinematicState
from ztrobot.errors import NoTasks, NonFiniteJacobian
from ztrobot.mechanism import RigidTransform, rotation_vector, wrap_angle
from ztrobot import metrics

EQUALITY = "equality"
LOWER = "lower"
UPPER = "upper"
RANGE = "range"


@dataclass(frozen=True)
class ControlObjective:
    kind: str
    target: float = 0.0
    lower: float = -np.inf
    upper: float = np.inf
    gain: float = 1.0
    feedforward: float = 0.0
    buffer: float = 0.05

    def __post_init__(self):
        if self.kind not in (EQUALITY, LOWER, UPPER, RANGE):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if not self.gain > 0:
            raise ValueError("gain must be positive")
        if self.kind != EQUALITY and not self.buffer > 0:
            raise ValueError("inequality objectives need a positive buffer")
        if self.kind == RANGE and not self.lower < self.upper:
            raise ValueError("range objective needs lower < upper")

    @classmethod
    def equality(cls, target, gain=1.0, feedforward=0.0):
        return cls(EQUALITY, target=target, gain=gain, feedforward=feedforward)

    @classmethod
    def lower_bound(cls, lower, gain=1.0, buffer=0.05, feedforward=0.0):
        return cls(LOWER, lower=lower, gain=gain, buffer=buffer, feedforward=feedforward)

    @classmethod
    def upper_bound(cls, upper, gain=1.0, buffer=0.05, feedforward=0.0):
        return cls(UPPER, upper=upper, gain=gain, buffer=buffer, feedforward=feedforward)

    @classmethod
    def range(cls, lower, upper, gain=1.0, buffer=0.05, feedforward=0.0):
        return cls(RANGE, lower=lower, upper=upper, gain=gain, buffer=buffer, feedforward=feedforward)


def smoothstep(u):
    """C1 cubic ramp from 0 at u <= 0 to 1 at u >= 1."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _lower_activation(x, obj):
    return smoothstep((obj.lower + obj.buffer - x) / obj.buffer)


def _upper_activation(x, obj):
    return smoothstep((x - obj.upper + obj.buffer) / obj.buffer)


def activation(value: float, obj: ControlObjective) -> float:
    if obj.kind == EQUALITY:
        return 1.0
    if obj.kind == LOWER:
        return float(_lower_activation(value, obj))
    if obj.kind == UPPER:
        return float(_upper_activation(value, obj))
    return float(max(_lower_activation(value, obj), _upper_activation(value, obj)))


def reference_rate(value: float, obj: ControlObjective) -> float:
    """Closed-loop rate ``gain * (setpoint - value) + feedforward``.

    Inequality objectives aim one buffer width inside the violated bound and
    return 0 while inactive.
    """
    if obj.kind == EQUALITY:
        return obj.gain * (obj.target - value) + obj.feedforward
    lo = _lower_activation(value, obj) if obj.kind in (LOWER, RANGE) else 0.0
    hi = _upper_activation(value, obj) if obj.kind in (UPPER, RANGE) else 0.0
    if lo == 0.0 and hi == 0.0:
        return 0.0
    setpoint = obj.lower + obj.buffer if lo >= hi else obj.upper - obj.buffer
    return obj.gain * (setpoint - value) + obj.feedforward


@dataclass
class StepContext:
    """Everything a task may need at one control step.

    ``feedforward`` is the commanded TCP twist on the controller time scale;
    ``twist`` and ``wrench`` are the physical machining quantities fed to the
    transmission-ratio metric.
    """

    state: KinematicState
    target: RigidTransform | None = None
    feedforward: np.ndarray = field(default_factory=lambda: np.zeros(6))
    twist: np.ndarray | None = None
    wrench: np.ndarray | None = None
    bounds: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def n(self) -> int:
        return self.state.model.n

    @property
    def length(self) -> float:
        return self.state.model.characteristic_length

    @cached_property
    def dexterity(self) -> tuple[float, float, float]:
        return metrics.dexterity(self.state.weighted)

    @cached_property
    def dexterity_gradient(self) -> np.ndarray:
        return metrics.dexterity_gradient(self.state.weighted, self.state.partials)

    @cached_property
    def rtr(self) -> float:
        return metrics.rtr(self.state.weighted, self.twist, self.wrench, self.length)

    @cached_property
    def rtr_gradient(self) -> np.ndarray:
        return metrics.rtr_gradient(
            self.state.weighted, self.state.partials, self.twist, self.wrench, self.length
        )

    def pose_error(self) -> np.ndarray:
        """[position error; rotation-vector error] toward ``target``."""
        tcp = self.state.tcp
        return np.concatenate(
            [
                self.target.translation - tcp.translation,
                rotation_vector(self.target.rotation @ tcp.rotation.T),
            ]
        )


@dataclass
class TaskRows:
    jacobian: np.ndarray
    reference: np.ndarray
    activation: np.ndarray


class Task(Protocol):
    name: str
    priority: int

    def rows(self, ctx: StepContext) -> TaskRows: ...


@dataclass
class PoseTask:
    """Six equality rows driving the TCP to ``ctx.target``.

    With ``feedforward`` set, the commanded twist in the context is added to
    the feedback term, which turns it into the trajectory-following task.
    """

    name: str = "pose"
    priority: int = 1
    gain: float = 1.0
    feedforward: bool = False
    max_linear: float = np.inf  # caps on the feedback error, m and rad
    max_angular: float = np.inf

    def rows(self, ctx: StepContext) -> TaskRows:
        err = ctx.pose_error()
        for sl, cap in ((slice(0, 3), self.max_linear), (slice(3, 6), self.max_angular)):
            size = np.linalg.norm(err[sl])
            if size > cap:
                err[sl] *= cap / size
        ref = self.gain * err
        if self.feedforward:
            ref = ref + ctx.feedforward
        return TaskRows(ctx.state.jacobian, ref, np.ones(6))


@dataclass
class ScalarTask:
    """One objective row; ``measure`` returns the value and its gradient."""

    name: str
    objective: ControlObjective
    measure: Callable[[StepContext], tuple[float, np.ndarray]]
    priority: int = 1
    regularization: tuple | None = None  # (threshold, damping) for this level

    def rows(self, ctx: StepContext) -> TaskRows:
        value, grad = self.measure(ctx)
        return TaskRows(
            np.asarray(grad, dtype=float)[None, :],
            np.array([reference_rate(value, self.objective)]),
            np.array([activation(value, self.objective)]),
        )


def measure_dexterity(ctx: StepContext) -> tuple[float, np.ndarray]:
    return ctx.dexterity[0], ctx.dexterity_gradient


def measure_rtr(ctx: StepContext) -> tuple[float, np.ndarray]:
    return ctx.rtr, ctx.rtr_gradient


def dexterity_task(objective: ControlObjective, priority: int = 2, regularization=None) -> ScalarTask:
    return ScalarTask("dexterity", objective, measure_dexterity, priority, regularization)


def rtr_task(objective: ControlObjective, priority: int = 2, regularization=None) -> ScalarTask:
    return ScalarTask("rtr", objective, measure_rtr, priority, regularization)


@dataclass
class JointRangeTask:
    """Range objectives on selected joint angles (one row per joint)."""

    joints: tuple
    lower: tuple
    upper: tuple
    name: str = "joint_limits"
    priority: int = 1
    gain: float = 1.0
    buffer: float = 0.1

    def rows(self, ctx: StepContext) -> TaskRows:
        m = len(self.joints)
        jac = np.zeros((m, ctx.n))
        ref = np.zeros(m)
        act = np.zeros(m)
        for k, (j, lo, hi) in enumerate(zip(self.joints, self.lower, self.upper)):
            obj = ControlObjective.range(lo, hi, self.gain, self.buffer)
            x = ctx.state.q[j]
            jac[k, j] = 1.0
            ref[k] = reference_rate(x, obj)
            act[k] = activation(x, obj)
        return TaskRows(jac, ref, act)


@dataclass
class Action:
    name: str
    tasks: list

    def __post_init__(self):
        if not self.tasks:
            raise NoTasks(f"action {self.name!r} has no tasks")

    def levels(self) -> list[tuple[int, list]]:
        ordered = sorted(self.tasks, key=lambda t: t.priority)
        return [(p, list(g)) for p, g in groupby(ordered, key=lambda t: t.priority)]


@dataclass(frozen=True)
class SolverParams:
    """Regularization settings.

    ``threshold``/``damping`` shape the pseudo-inverse that produces each
    level's correction; ``projection_threshold``/``projection_damping`` the
    one that builds the null-space projector handed to lower levels. Keeping
    the latter tight preserves priorities even when the former is loose.
    """

    threshold: float = 1e-4
    damping: float = 1e-3
    projection_threshold: float = 1e-4
    projection_damping: float = 1e-3


@dataclass
class SolverOutput:
    q_dot_ref: np.ndarray
    residuals: list  # per level: reference - J qdot (unweighted)
    activations: dict  # task name -> activation values
    projected_norms: list  # per level: row norms of J Q before solving
    scales: list  # per level: fraction of the level's correction kept

    def blend(self, other: "SolverOutput", s: float) -> "SolverOutput":
        return SolverOutput(
            (1.0 - s) * self.q_dot_ref + s * other.q_dot_ref,
            other.residuals if s >= 0.5 else self.residuals,
            other.activations if s >= 0.5 else self.activations,
            other.projected_norms if s >= 0.5 else self.projected_norms,
            other.scales if s >= 0.5 else self.scales,
        )


def _damped_inverse(s: np.ndarray, threshold: float, damping: float) -> np.ndarray:
    ratio = np.clip(s / threshold, 0.0, 1.0)
    mu = damping * 0.5 * (1.0 + np.cos(np.pi * ratio))
    denom = s * s + mu
    return np.divide(s, denom, out=np.zeros_like(s), where=denom > 0)


def damped_pinv(w: np.ndarray, threshold: float = 1e-4, damping: float = 1e-3) -> np.ndarray:
    """Pseudo-inverse with damping phased in below ``threshold``.

    Singular values at or above the threshold are inverted exactly; below it
    the damping grows along a raised cosine up to ``damping`` at zero.
    """
    u, s, vt = np.linalg.svd(w, full_matrices=False)
    return (vt.T * _damped_inverse(s, threshold, damping)) @ u.T


def _box_scale(base: np.ndarray, delta: np.ndarray, bounds) -> float:
    """Largest s in [0, 1] keeping base + s*delta inside the bounds."""
    lo, hi = bounds
    s = 1.0
    up = delta > 0
    down = delta < 0
    if np.any(up):
        s = min(s, float(np.min((hi[up] - base[up]) / delta[up])))
    if np.any(down):
        s = min(s, float(np.min((lo[down] - base[down]) / delta[down])))
    return max(s, 0.0)


def solve(action: Action, ctx: StepContext, params: SolverParams | None = None) -> SolverOutput:
    params = params or SolverParams()
    n = ctx.n
    q_dot = np.zeros(n)
    proj = np.eye(n)
    evaluated = []
    activations = {}
    projected = []
    scales = []
    first_active = True
    for _, tasks in action.levels():
        parts = [t.rows(ctx) for t in tasks]
        for t, p in zip(tasks, parts):
            activations[t.name] = p.activation
        jac = np.vstack([p.jacobian for p in parts])
        ref = np.concatenate([p.reference for p in parts])
        act = np.concatenate([p.activation for p in parts])
        if not (np.all(np.isfinite(jac)) and np.all(np.isfinite(ref))):
            raise NonFiniteJacobian(f"non-finite rows in level {[t.name for t in tasks]}")
        evaluated.append((jac, ref))
        keep = act > 0.0
        if not np.any(keep):
            projected.append(np.zeros(len(act)))
            scales.append(0.0)
            continue
        root = np.sqrt(act[keep])
        jq = jac[keep] @ proj
        norms = np.zeros(len(act))
        norms[keep] = np.linalg.norm(jq, axis=1)
        projected.append(norms)
        w = root[:, None] * jq
        err = root * (ref[keep] - jac[keep] @ q_dot)
        threshold, damping = params.threshold, params.damping
        for t in tasks:
            reg = getattr(t, "regularization", None)
            if reg is not None:
                threshold, damping = max(threshold, reg[0]), max(damping, reg[1])
        u, sv, vt = np.linalg.svd(w, full_matrices=False)
        w_pinv = (vt.T * _damped_inverse(sv, threshold, damping)) @ u.T
        delta = proj @ (w_pinv @ err)
        scale = 1.0
        if ctx.bounds is not None and not first_active:
            scale = _box_scale(q_dot, delta, ctx.bounds)
        q_dot = q_dot + scale * delta
        inv_p = _damped_inverse(sv, params.projection_threshold, params.projection_damping)
        proj = proj @ (np.eye(n) - (vt.T * (inv_p * sv)) @ vt)
        scales.append(scale)
        first_active = False
    residuals = [ref - jac @ q_dot for jac, ref in evaluated]
    return SolverOutput(q_dot, residuals, activations, projected, scales)


def transition_ramp(elapsed: float, horizon: float) -> float:
    if not horizon > 0:
        raise ValueError("transition horizon must be positive")
    return float(smoothstep(elapsed / horizon))


def action_transition(
    prev: Action,
    nxt: Action,
    elapsed: float,
    horizon: float,
    ctx: StepContext,
    params: SolverParams | None = None,
) -> SolverOutput:
    """Blend of the two actions' solutions, sliding from ``prev`` to ``nxt``."""
    s = transition_ramp(elapsed, horizon)
    if s == 0.0:
        return solve(prev, ctx, params)
    if s == 1.0:
        return solve(nxt, ctx, params)
    return solve(prev, ctx, params).blend(solve(nxt, ctx, params), s)


def limit_velocity(q_dot_ref, dt: float, limits: JointLimits, q_dot_prev=None) -> np.ndarray:
    """Scale the command into the velocity box, then cap its change per step.

    Both limits scale the vector (or the change) uniformly, so the commanded
    direction is preserved.
    """
    v = np.asarray(q_dot_ref, dtype=float)
    peak = np.max(np.abs(v)) if v.size else 0.0
    if peak > limits.velocity:
        v = v * (limits.velocity / peak)
    if q_dot_prev is not None:
        prev = np.asarray(q_dot_prev, dtype=float)
        step = v - prev
        peak = np.max(np.abs(step)) if step.size else 0.0
        cap = limits.acceleration * dt
        if peak > cap:
            v = prev + step * (cap / peak)
    return v


def integrate_step(q, q_dot_ref, dt: float, limits: JointLimits, q_dot_prev=None):
    """Explicit Euler step under velocity/acceleration limits.

    Returns the wrapped new configuration and the velocity actually applied.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    v = limit_velocity(q_dot_ref, dt, limits, q_dot_prev)
    return wrap_angle(np.asarray(q, dtype=float) + v * dt), v


def velocity_bounds(limits: JointLimits, dt: float, q_dot_prev: np.ndarray):
    """Per-joint box reachable in one step from ``q_dot_prev``."""
    cap = limits.acceleration * dt
    lo = np.maximum(-limits.velocity, q_dot_prev - cap)
    hi = np.minimum(limits.velocity, q_dot_prev + cap)
    return lo, hi
