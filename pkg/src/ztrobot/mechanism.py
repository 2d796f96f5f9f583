"""Geometric and differential model of one zero-torsion two-DOF module.

The moving platform of a module is parameterized by tilt & azimuth angles:
``phi`` picks the direction along which the platform tilts and ``theta`` the
amount of tilt. The platform never rotates about its own normal, so every
rotation axis lies in the base x-y plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ztrobot.errors import TiltOutOfRange

# Slack allowed on the arccos argument before calling a tilt unreachable.
ACOS_TOL = 1e-9


def wrap_angle(a):
    """Map angles to the half-open interval (-pi, pi]; values inside are kept as is."""
    a = np.asarray(a, dtype=float)
    inside = (a > -np.pi) & (a <= np.pi)
    return np.where(inside, a, np.pi - np.mod(np.pi - a, 2.0 * np.pi))


@dataclass(frozen=True)
class ModuleParams:
    r: float = 0.07
    alpha: float = np.pi / 12

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"module half-height must be positive, got {self.r}")
        if not 0 < self.alpha < np.pi / 2:
            raise ValueError(f"tube slope must lie in (0, pi/2), got {self.alpha}")

    @property
    def max_tilt(self) -> float:
        return 2.0 * self.alpha


@dataclass(frozen=True)
class TiltAzimuth:
    phi: float
    theta: float


@dataclass(frozen=True)
class ActuatorAngles:
    q1: float
    q2: float

    def wrapped(self) -> "ActuatorAngles":
        return ActuatorAngles(float(wrap_angle(self.q1)), float(wrap_angle(self.q2)))

    def as_array(self) -> np.ndarray:
        return np.array([self.q1, self.q2])


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation plus translation; composes with ``@``."""

    rotation: np.ndarray
    translation: np.ndarray

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3].copy(), m[:3, 3].copy())

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def is_valid(self, tol: float = 1e-12) -> bool:
        r = self.rotation
        return bool(
            np.allclose(r.T @ r, np.eye(3), atol=tol, rtol=0)
            and abs(np.linalg.det(r) - 1.0) <= tol
        )


def rotation_vector(rotation) -> np.ndarray:
    """Axis-angle vector (axis scaled by angle) of a rotation matrix."""
    r = np.asarray(rotation, dtype=float)
    cos_a = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos_a)
    skew = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if angle < 1e-6:
        # first-order expansion; the skew part is 2*sin(angle)*axis
        return 0.5 * skew
    if np.pi - angle < 1e-6:
        # near pi the skew part vanishes; take the axis from the symmetric part
        b = (r + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(b)))
        axis = b[:, k] / np.sqrt(b[k, k])
        if skew @ axis < 0:
            axis = -axis
        return angle * axis
    return angle / (2.0 * np.sin(angle)) * skew


def tilt_rotation(phi, theta) -> np.ndarray:
    """Platform rotation for azimuth ``phi`` and tilt ``theta``."""
    cp, sp = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [cp * cp * ct + sp * sp, cp * sp * (ct - 1.0), cp * st],
            [sp * cp * (ct - 1.0), sp * sp * ct + cp * cp, sp * st],
            [-st * cp, -st * sp, ct],
        ]
    )


def tilt_translation(phi, theta, r) -> np.ndarray:
    st = np.sin(theta)
    return np.array([r * st * np.cos(phi), r * st * np.sin(phi), r + r * np.cos(theta)])


def module_transform(a: TiltAzimuth, p: ModuleParams) -> RigidTransform:
    """Pose of the moving platform frame in the base platform frame."""
    return RigidTransform(
        tilt_rotation(a.phi, a.theta), tilt_translation(a.phi, a.theta, p.r)
    )


def actuator_to_tilt_azimuth(q: ActuatorAngles, p: ModuleParams) -> TiltAzimuth:
    """Tilt & azimuth reached for motor angles ``q``.

    Uses the two-argument arctangent, so the sign of theta follows the sign
    of ``q2 - q1``.
    """
    phi = wrap_angle((q.q1 + q.q2 - np.pi) / 2.0)
    ta = np.tan(p.alpha)
    s = np.sin((q.q1 - q.q2) / 2.0)
    theta = np.arctan2(-2.0 * ta * s, 1.0 - ta * ta * s * s)
    return TiltAzimuth(float(phi), float(theta))


def tilt_azimuth_to_actuator(
    a: TiltAzimuth, p: ModuleParams
) -> tuple[ActuatorAngles, ActuatorAngles]:
    """Both motor solutions reaching ``a``, wrapped to (-pi, pi].

    The first entry is the ``+arccos`` branch. At zero tilt the arccos
    argument takes its limit 0 and both branches give the same pose, the
    first at ``q1 = q2 = phi + pi/2`` and the second half a turn away.
    """
    if abs(a.theta) > p.max_tilt + ACOS_TOL:
        raise TiltOutOfRange(
            f"|theta|={abs(a.theta):.6g} exceeds the module limit {p.max_tilt:.6g}"
        )
    # -cos(a)(cos(t)-1) / (sin(a) sin(t)) == tan(t/2) / tan(a), finite at t = 0
    arg = np.tan(a.theta / 2.0) / np.tan(p.alpha)
    if abs(arg) > 1.0 + ACOS_TOL:
        raise TiltOutOfRange(f"arccos argument {arg:.12g} outside [-1, 1]")
    c = float(np.arccos(np.clip(arg, -1.0, 1.0)))
    first = ActuatorAngles(a.phi + c, a.phi - c + np.pi).wrapped()
    second = ActuatorAngles(a.phi - c, a.phi + c + np.pi).wrapped()
    return first, second


def closest_branch(
    solutions: tuple[ActuatorAngles, ActuatorAngles], current: ActuatorAngles
) -> ActuatorAngles:
    """Pick the solution nearest to ``current`` in wrapped angular distance."""

    def dist(s: ActuatorAngles) -> float:
        d = wrap_angle(s.as_array() - current.as_array())
        return float(np.sum(d * d))

    return min(solutions, key=dist)


@dataclass(frozen=True, eq=False)
class ModuleJacobians:
    j1: np.ndarray  # 6x2, (phi_dot, theta_dot) -> platform twist
    j2: np.ndarray  # 2x2, (q1_dot, q2_dot) -> (phi_dot, theta_dot)
    j: np.ndarray  # 6x2, j1 @ j2


def tilt_jacobian(phi, theta, r) -> np.ndarray:
    """6x2 map from (phi_dot, theta_dot) to [linear; angular] platform twist."""
    cp, sp = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [-r * sp * st, r * cp * ct],
            [r * cp * st, r * sp * ct],
            [0.0, -r * st],
            [-cp * st, -sp],
            [-sp * st, cp],
            [1.0 - ct, 0.0],
        ]
    )


def actuator_rate_matrix(q: ActuatorAngles, p: ModuleParams) -> np.ndarray:
    ta = np.tan(p.alpha)
    half = (q.q1 - q.q2) / 2.0
    c = 2.0 * ta * np.cos(half) / (1.0 + ta * ta * np.sin(half) ** 2)
    return 0.5 * np.array([[1.0, 1.0], [-c, c]])


def module_jacobians(q: ActuatorAngles, p: ModuleParams) -> ModuleJacobians:
    a = actuator_to_tilt_azimuth(q, p)
    j1 = tilt_jacobian(a.phi, a.theta, p.r)
    j2 = actuator_rate_matrix(q, p)
    return ModuleJacobians(j1, j2, j1 @ j2)


def module_workspace(p: ModuleParams, grid: int) -> np.ndarray:
    """Sample the platform workspace over (q1, q2) in [-pi, pi]^2.

    Returns an array with one row per sample and columns
    ``q1, q2, phi, theta, x, y, z`` (frame-origin position in the base frame).
    """
    if grid < 2:
        raise ValueError("grid must be at least 2")
    axis = np.linspace(-np.pi, np.pi, grid)
    q1, q2 = (g.ravel() for g in np.meshgrid(axis, axis, indexing="ij"))
    phi = wrap_angle((q1 + q2 - np.pi) / 2.0)
    ta = np.tan(p.alpha)
    s = np.sin((q1 - q2) / 2.0)
    theta = np.arctan2(-2.0 * ta * s, 1.0 - ta * ta * s * s)
    st = np.sin(theta)
    xyz = np.column_stack(
        [p.r * st * np.cos(phi), p.r * st * np.sin(phi), p.r + p.r * np.cos(theta)]
    )
    return np.column_stack([q1, q2, phi, theta, xyz])
