"""Kinematics, kinetostatic metrics and task-priority IK for a redundant
robot built from zero-torsion two-DOF modules."""

from ztrobot.mechanism import (
    ActuatorAngles,
    ModuleParams,
    RigidTransform,
    TiltAzimuth,
    actuator_to_tilt_azimuth,
    module_jacobians,
    module_transform,
    tilt_azimuth_to_actuator,
)
from ztrobot.chain import (
    FixedLink,
    Module,
    Revolute,
    RobotModel,
    end_effector_jacobian,
    build_rp120,
    forward_kinematics,
    weighted_jacobian,
)
from ztrobot.metrics import combined_score, dexterity, rtr

__version__ = "0.1.0"

__all__ = [
    "ActuatorAngles",
    "FixedLink",
    "Module",
    "ModuleParams",
    "Revolute",
    "RigidTransform",
    "RobotModel",
    "TiltAzimuth",
    "actuator_to_tilt_azimuth",
    "combined_score",
    "dexterity",
    "end_effector_jacobian",
    "forward_kinematics",
    "module_jacobians",
    "module_transform",
    "build_rp120",
    "rtr",
    "tilt_azimuth_to_actuator",
    "weighted_jacobian",
]
