"""Serial chain of modules, rigid links and revolute joints.

Joint coordinates are ordered as the segments are: two motor angles per
module, one angle per revolute joint. Jacobians use [linear; angular] rows
and give the twist of the tool-center point in the base frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from types import SimpleNamespace
from typing import Union

import numpy as np

from ztrobot.errors import DimensionMismatch
from ztrobot.mechanism import ModuleParams, RigidTransform


@dataclass(frozen=True)
class Module:
    params: ModuleParams = field(default_factory=ModuleParams)
    dof = 2


@dataclass(frozen=True)
class FixedLink:
    """Rigid offset of ``length`` along ``direction`` of the current frame."""

    length: float
    direction: tuple = (0.0, 0.0, 1.0)
    dof = 0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "direction", tuple(d / np.linalg.norm(d)))

    @property
    def offset(self) -> np.ndarray:
        return self.length * np.asarray(self.direction)


@dataclass(frozen=True)
class Revolute:
    axis: tuple = (0.0, 0.0, 1.0)
    dof = 1

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        n = np.linalg.norm(a)
        if a.shape != (3,) or n == 0:
            raise ValueError(f"revolute axis must be a nonzero 3-vector, got {self.axis}")
        object.__setattr__(self, "axis", tuple(a / n))


Segment = Union[Module, FixedLink, Revolute]


@dataclass(frozen=True)
class JointLimits:
    velocity: float = 1.0
    acceleration: float = 2.0


@dataclass(frozen=True, eq=False)
class RobotModel:
    segments: tuple
    tool: RigidTransform = field(default_factory=RigidTransform.identity)
    characteristic_length: float = 0.25
    limits: JointLimits = field(default_factory=JointLimits)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.characteristic_length > 0:
            raise ValueError("characteristic length must be positive")

    @property
    def n(self) -> int:
        return sum(s.dof for s in self.segments)

    @property
    def n_modules(self) -> int:
        return sum(isinstance(s, Module) for s in self.segments)

    def check(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n,):
            raise DimensionMismatch(f"expected {self.n} joint values, got shape {q.shape}")
        return q

    @cached_property
    def layout(self) -> SimpleNamespace:
        """Index arrays locating module and revolute columns."""
        actuated = [s for s in self.segments if s.dof]
        cols = np.cumsum([0] + [s.dof for s in actuated])[:-1]
        mod = [k for k, s in enumerate(actuated) if isinstance(s, Module)]
        rev = [k for k, s in enumerate(actuated) if isinstance(s, Revolute)]
        return SimpleNamespace(
            module_segments=np.array(mod, dtype=int),
            module_columns=cols[mod].astype(int) if mod else np.zeros(0, int),
            module_r=np.array([actuated[k].params.r for k in mod]),
            module_tan_alpha=np.tan([actuated[k].params.alpha for k in mod]),
            revolute_segments=np.array(rev, dtype=int),
            revolute_columns=cols[rev].astype(int) if rev else np.zeros(0, int),
            revolute_axes=np.array([actuated[k].axis for k in rev]).reshape(-1, 3),
        )

    def straight(self) -> np.ndarray:
        """Configuration with every module at zero tilt (and azimuth zero)."""
        q = np.zeros(self.n)
        i = 0
        for s in self.segments:
            if isinstance(s, Module):
                q[i : i + 2] = np.pi / 2
            i += s.dof
        return q


def tool_transform(length: float, bend: float) -> RigidTransform:
    """Tool mount to tool-center point: offset along z, then a bend about y."""
    c, s = np.cos(bend), np.sin(bend)
    rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return RigidTransform(rot, np.array([0.0, 0.0, length]))


def build_rp120(
    module: ModuleParams,
    link_length: float,
    tool_length: float,
    tool_bend: float,
    characteristic_length: float,
    limits: JointLimits | None = None,
) -> RobotModel:
    """Shoulder (3 modules), link, elbow (4), link, wrist (3), revolute, tool."""
    m = Module(module)
    segments = (
        [m] * 3
        + [FixedLink(link_length)]
        + [m] * 4
        + [FixedLink(link_length)]
        + [m] * 3
        + [Revolute()]
    )
    return RobotModel(
        tuple(segments),
        tool_transform(tool_length, tool_bend),
        characteristic_length,
        limits or JointLimits(),
    )


def _axis_rotation(axis, angle):
    """Batched Rodrigues rotation about a fixed unit axis."""
    k = np.asarray(axis)
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    s = np.sin(angle)[..., None, None]
    c = np.cos(angle)[..., None, None]
    return np.eye(3) + s * kx + (1.0 - c) * (kx @ kx)


def _module_locals(model: RobotModel, qs: np.ndarray, jacobian: bool):
    """Platform rotations, offsets and local 6x2 Jacobians of every module.

    Vectorized over the batch and over modules: shapes (B,M,3,3), (B,M,3)
    and (B,M,6,2).
    """
    lay = model.layout
    idx = lay.module_columns
    r = lay.module_r
    ta = lay.module_tan_alpha
    q1 = qs[:, idx]
    q2 = qs[:, idx + 1]
    half = (q1 - q2) / 2.0
    sh = np.sin(half)
    phi = (q1 + q2 - np.pi) / 2.0
    theta = np.arctan2(-2.0 * ta * sh, 1.0 - ta * ta * sh * sh)
    cp, sp = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cs = cp * sp * (ct - 1.0)
    local_r = np.stack(
        [
            np.stack([cp * cp * ct + sp * sp, cs, cp * st], axis=-1),
            np.stack([cs, sp * sp * ct + cp * cp, sp * st], axis=-1),
            np.stack([-st * cp, -st * sp, ct], axis=-1),
        ],
        axis=-2,
    )
    local_p = np.stack([r * st * cp, r * st * sp, r + r * ct], axis=-1)
    if not jacobian:
        return local_r, local_p, None
    zero = np.zeros_like(ct)
    d_phi = np.stack([-r * sp * st, r * cp * st, zero, -cp * st, -sp * st, 1.0 - ct], axis=-1)
    d_theta = np.stack([r * cp * ct, r * sp * ct, -r * st, -sp, cp, zero], axis=-1)
    c = 2.0 * ta * np.cos(half) / (1.0 + ta * ta * sh * sh)
    # j = [d_phi, d_theta] @ 0.5 * [[1, 1], [-c, c]]
    a0 = 0.5 * d_phi
    a1 = 0.5 * c[..., None] * d_theta
    local_j = np.stack([a0 - a1, a0 + a1], axis=-1)
    return local_r, local_p, local_j


def _kinematics(model: RobotModel, qs: np.ndarray, jacobian: bool = True):
    """Tool poses and (optionally) Jacobians for a batch of configurations.

    ``qs`` has shape (B, n). Returns rotations (B,3,3), positions (B,3) and,
    when requested, Jacobians (B,6,n).
    """
    b = qs.shape[0]
    local_r, local_p, local_j = _module_locals(model, qs, jacobian)
    rot = np.broadcast_to(np.eye(3), (b, 3, 3))
    pos = np.zeros((b, 3))
    base_rot = []  # world rotation at the base of each actuated segment
    origin = []  # world point each actuated segment's lever arm starts from
    i = 0
    k = 0
    for seg in model.segments:
        if isinstance(seg, FixedLink):
            pos = pos + rot @ seg.offset
        elif isinstance(seg, Revolute):
            base_rot.append(rot)
            origin.append(pos)
            rot = rot @ _axis_rotation(seg.axis, qs[:, i])
            i += 1
        else:
            base_rot.append(rot)
            pos = pos + (rot @ local_p[:, k, :, None])[..., 0]
            rot = rot @ local_r[:, k]
            origin.append(pos)
            k += 1
            i += 2
    tool = model.tool
    pos = pos + rot @ tool.translation
    rot = rot @ tool.rotation
    if not jacobian:
        return rot, pos, None
    lay = model.layout
    cols = np.empty((b, 6, model.n))
    if not base_rot:
        return rot, pos, cols
    base_rot = np.stack(base_rot, axis=1)  # (B,S,3,3)
    arm = (pos[:, None, :] - np.stack(origin, axis=1))[..., None]  # (B,S,3,1)
    mods = lay.module_segments
    if len(mods):
        rm = base_rot[:, mods]
        lin = rm @ local_j[:, :, :3]
        ang = rm @ local_j[:, :, 3:]
        lin = lin + np.cross(ang, arm[:, mods], axis=-2)
        idx = lay.module_columns
        cols[:, :3, idx] = lin[..., 0].transpose(0, 2, 1)
        cols[:, :3, idx + 1] = lin[..., 1].transpose(0, 2, 1)
        cols[:, 3:, idx] = ang[..., 0].transpose(0, 2, 1)
        cols[:, 3:, idx + 1] = ang[..., 1].transpose(0, 2, 1)
    revs = lay.revolute_segments
    if len(revs):
        axes = lay.revolute_axes  # (R,3)
        ang = (base_rot[:, revs] @ axes[:, :, None])  # (B,R,3,1)
        lin = np.cross(ang, arm[:, revs], axis=-2)
        cols[:, :3, lay.revolute_columns] = lin[..., 0].transpose(0, 2, 1)
        cols[:, 3:, lay.revolute_columns] = ang[..., 0].transpose(0, 2, 1)
    return rot, pos, cols


def forward_kinematics(model: RobotModel, q) -> RigidTransform:
    q = model.check(q)
    rot, pos, _ = _kinematics(model, q[None, :], jacobian=False)
    return RigidTransform(rot[0], pos[0])


def end_effector_jacobian(model: RobotModel, q) -> np.ndarray:
    q = model.check(q)
    return _kinematics(model, q[None, :])[2][0]


def weight_rows(j: np.ndarray, length: float) -> np.ndarray:
    """Divide the linear (first three) rows by the characteristic length."""
    w = np.array(j, dtype=float, copy=True)
    w[..., :3, :] /= length
    return w


def weighted_jacobian(model: RobotModel, q) -> np.ndarray:
    return weight_rows(end_effector_jacobian(model, q), model.characteristic_length)


def jacobian_partials(model: RobotModel, q, h: float = 1e-6) -> np.ndarray:
    """Central differences of the weighted Jacobian, shape (n, 6, n).

    Slice ``i`` is the derivative with respect to joint ``i``.
    """
    q = model.check(q)
    n = model.n
    steps = h * np.eye(n)
    qs = np.concatenate([q + steps, q - steps])
    jw = weight_rows(_kinematics(model, qs)[2], model.characteristic_length)
    return (jw[:n] - jw[n:]) / (2.0 * h)


@dataclass(eq=False)
class KinematicState:
    """Lazily evaluated kinematic quantities of one configuration."""

    model: RobotModel
    q: np.ndarray
    fd_step: float = 1e-6

    def __post_init__(self):
        self.q = self.model.check(self.q)

    @cached_property
    def _base(self):
        rot, pos, cols = _kinematics(self.model, self.q[None, :])
        return RigidTransform(rot[0], pos[0]), cols[0]

    @property
    def tcp(self) -> RigidTransform:
        return self._base[0]

    @property
    def jacobian(self) -> np.ndarray:
        return self._base[1]

    @cached_property
    def weighted(self) -> np.ndarray:
        return weight_rows(self.jacobian, self.model.characteristic_length)

    @cached_property
    def partials(self) -> np.ndarray:
        return jacobian_partials(self.model, self.q, self.fd_step)


def sample_workspace(model: RobotModel, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """TCP positions for random configurations plus their half-turn twins.

    Adding pi to every module motor and to the revolute joint spins the whole
    arm by pi about the base z-axis, so the returned cloud is exactly
    symmetric about that axis. Rows are ``x, y, z``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    qs = rng.uniform(-np.pi, np.pi, size=(n_samples, model.n))
    twins = qs + np.pi
    _, pos, _ = _kinematics(model, np.concatenate([qs, twins]), jacobian=False)
    return pos
