"""YAML experiment configuration: presets, schema validation and model building.

A user file is merged over a preset (``preset: rp120`` unless stated), key by
key. Each file is checked against the bundled JSON schema on its own first, so
diagnostics point at lines of the file that holds the mistake.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from ztrobot.chain import FixedLink, JointLimits, Module, Revolute, RobotModel, build_rp120, tool_transform
from ztrobot.errors import ConfigError
from ztrobot.experiment import (
    ExperimentSettings,
    Face,
    MetricTaskSettings,
    TrajectoryParams,
)
from ztrobot.mechanism import ModuleParams
from ztrobot.tpik import SolverParams

DEFAULT_PRESET = "rp120"


def _preset_text(name: str) -> tuple[str, str]:
    res = resources.files("ztrobot") / "presets" / f"{name}.yaml"
    if not res.is_file():
        known = sorted(p.name[:-5] for p in (resources.files("ztrobot") / "presets").iterdir() if p.name.endswith(".yaml"))
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(known)}")
    return res.read_text(encoding="utf-8"), f"<preset {name}>"


def schema() -> dict:
    return json.loads((resources.files("ztrobot") / "presets" / "schema.json").read_text(encoding="utf-8"))


def _stringify_keys(obj):
    if isinstance(obj, dict):
        return {str(k): _stringify_keys(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_stringify_keys(v) for v in obj]
    return obj


def _locate(node, path) -> int | None:
    """1-based line of the deepest YAML node reachable along ``path``."""
    line = None
    for key in path:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if str(k.value) == str(key):
                    nxt = v
                    line = k.start_mark.line + 1
                    break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            node = None
    if node is not None:
        line = node.start_mark.line + 1
    return line


def parse(text: str, source: str = "<string>") -> dict:
    """Parse and schema-check one YAML document; raises ConfigError with line numbers."""
    try:
        data = yaml.safe_load(text)
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: invalid YAML: {exc}") from exc
    data = _stringify_keys(data if data is not None else {})
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    validator = jsonschema.Draft202012Validator(schema())
    problems = []
    for err in sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path))):
        line = _locate(node, list(err.absolute_path))
        where = ".".join(map(str, err.absolute_path)) or "<root>"
        prefix = f"{source}:{line}" if line else source
        problems.append(f"{prefix}: {where}: {err.message}")
    if problems:
        raise ConfigError("\n".join(problems))
    return data


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _resolve(data: dict, seen: tuple = ()) -> dict:
    name = data.get("preset", DEFAULT_PRESET if not seen else None)
    if name is None or name in seen:
        return data
    base = _resolve(parse(*_preset_text(name)), seen + (name,))
    merged = deep_merge(base, data)
    merged.pop("preset", None)
    return merged


@dataclass
class ExperimentConfig:
    model: RobotModel
    settings: ExperimentSettings
    seed: int = 0
    repetitions: int = 20
    trajectories: tuple = (1,)
    optimize: str = "both"
    workers: int | None = None
    output: str = "results"
    paper_scale: dict = field(default_factory=dict)
    workspace: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def at_paper_scale(self) -> "ExperimentConfig":
        ps = self.paper_scale
        trajectory = replace(self.settings.trajectory, steps=ps.get("steps", 2001))
        return replace(
            self,
            settings=replace(self.settings, trajectory=trajectory),
            repetitions=ps.get("repetitions", 100),
            trajectories=tuple(ps.get("trajectories", (1, 2, 3, 4))),
        )


def _module_params(spec: dict, default: dict) -> ModuleParams:
    merged = {**default, **{k: v for k, v in spec.items() if k in ("r", "alpha_deg")}}
    return ModuleParams(r=merged.get("r", 0.07), alpha=np.deg2rad(merged.get("alpha_deg", 15.0)))


def build_model(robot: dict) -> RobotModel:
    module_default = robot.get("module", {})
    tool = robot.get("tool", {})
    limits = JointLimits(**robot.get("limits", {}))
    length = robot.get("characteristic_length", 0.25)
    bend = np.deg2rad(tool.get("bend_deg", 0.0))
    if robot.get("layout", "rp120") == "rp120":
        return build_rp120(
            _module_params({}, module_default),
            robot.get("link_length", 0.2),
            tool.get("length", 0.0),
            bend,
            length,
            limits,
        )
    segments = []
    for seg in robot.get("segments", []):
        kind = seg["type"]
        if kind == "module":
            segments.append(Module(_module_params(seg, module_default)))
        elif kind == "link":
            if "length" not in seg:
                raise ConfigError("link segments need a length")
            segments.append(FixedLink(seg["length"], tuple(seg.get("direction", (0.0, 0.0, 1.0)))))
        else:
            segments.append(Revolute(tuple(seg.get("axis", (0.0, 0.0, 1.0)))))
    if not segments:
        raise ConfigError("a custom robot layout needs at least one segment")
    return RobotModel(tuple(segments), tool_transform(tool.get("length", 0.0), bend), length, limits)


def build_settings(data: dict) -> ExperimentSettings:
    traj = dict(data.get("trajectory", {}))
    faces = {int(k): Face(**{**v, "tool_z": tuple(v["tool_z"]), "tool_x": tuple(v["tool_x"])}) for k, v in traj.pop("faces", {}).items()}
    if "center" in traj:
        traj["center"] = tuple(traj["center"])
    trajectory = TrajectoryParams(**traj, **({"faces": faces} if faces else {}))
    for fid, face in trajectory.faces.items():
        if len({face.normal, face.u, face.v}) != 3:
            raise ConfigError(f"face {fid}: normal, u and v must be distinct axes")
    tasks = data.get("tasks", {})
    solver = data.get("solver", {})
    run = data.get("run", {})
    pose = tasks.get("pose", {})
    tol = run.get("reach_tolerance", {})
    local = run.get("local_max", {})
    weights = tuple(run.get("weights", (0.5, 0.5)))
    if abs(sum(weights) - 1.0) > 1e-12:
        raise ConfigError(f"run.weights must sum to 1, got {list(weights)}")
    defaults = ExperimentSettings()
    return ExperimentSettings(
        trajectory=trajectory,
        solver=SolverParams(**solver["reach"]) if "reach" in solver else defaults.solver,
        tracking_solver=SolverParams(**solver["tracking"]) if "tracking" in solver else defaults.tracking_solver,
        levels=data.get("actions", defaults.levels),
        pose_gain=pose.get("gain", defaults.pose_gain),
        velocity_gain=tasks.get("velocity", {}).get("gain", defaults.velocity_gain),
        max_linear=pose.get("max_linear", defaults.max_linear),
        max_angular=pose.get("max_angular", defaults.max_angular),
        dexterity=MetricTaskSettings(**tasks.get("dexterity", {})),
        rtr=MetricTaskSettings(**tasks.get("rtr", {})),
        dt=run.get("dt", defaults.dt),
        substeps=run.get("substeps", defaults.substeps),
        weights=weights,
        reach_tolerance=(tol.get("position", 1e-4), tol.get("rotation", 1e-4)),
        reach_max_steps=run.get("reach_max_steps", defaults.reach_max_steps),
        optimized_reach_max_steps=run.get("optimized_reach_max_steps", defaults.optimized_reach_max_steps),
        local_max_gradient=local.get("gradient", defaults.local_max_gradient),
        local_max_gain=local.get("gain", defaults.local_max_gain),
        local_max_patience=local.get("patience", defaults.local_max_patience),
        tracking_threshold=run.get("tracking_threshold", defaults.tracking_threshold),
        transition_time=run.get("transition_time", defaults.transition_time),
        start_min_height=run.get("start_min_height", defaults.start_min_height),
    )


def from_dict(data: dict) -> ExperimentConfig:
    """Build a config from an already merged and validated mapping."""
    run = data.get("run", {})
    try:
        model = build_model(data.get("robot", {}))
        settings = build_settings(data)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(
        model=model,
        settings=settings,
        seed=run.get("seed", 0),
        repetitions=run.get("repetitions", 20),
        trajectories=tuple(run.get("trajectories", (1,))),
        optimize=run.get("optimize", "both"),
        workers=run.get("workers"),
        output=run.get("output", "results"),
        paper_scale=data.get("paper_scale", {}),
        workspace=data.get("workspace", {}),
        raw=data,
    )


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    """Load a YAML file (merged over its preset) or the default preset."""
    if path is None:
        data = parse(*_preset_text(DEFAULT_PRESET))
    else:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        data = parse(text, str(p))
    return from_dict(_resolve(data))


def load_preset(name: str) -> ExperimentConfig:
    return from_dict(_resolve(parse(*_preset_text(name)), ()))


def rp120() -> RobotModel:
    """The RP-120 robot from the bundled preset."""
    return load_preset("rp120").model
