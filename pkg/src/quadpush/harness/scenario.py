"""Scenario configuration, scenario files and reference trajectories."""
from __future__ import annotations

import copy
import enum
import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from ..baselines import HeuristicConfig
from ..core import ObjectParams, ReferenceTrajectory, RobotParams, wrap_angle
from ..gait import GaitTable
from ..loco_mpc import LocoMpcConfig
from ..object_mpc import ObjectMpcConfig
from ..plant import PlantConfig

SCHEMA_VERSION = 1
REF_SAMPLE_DT = 0.01


class ConfigError(ValueError):
    """Invalid scenario or task description."""


class Task(enum.Enum):
    STRAIGHT_LINE = "StraightLine"
    VELOCITY_STEPS = "VelocitySteps"
    QUARTER_CIRCLE = "QuarterCircle"
    OBSTACLE_PATH = "ObstaclePath"
    CUSTOM = "Custom"


class Controller(enum.Enum):
    BASELINE = "Baseline"
    HEURISTIC = "Heuristic"
    HIERARCHICAL = "Hierarchical"


@dataclass
class TaskSpec:
    kind: Task = Task.STRAIGHT_LINE
    speed: float = 0.3
    length: float = 3.0
    radius: float = 2.0
    levels: tuple = (0.2, 0.4, 0.1, 0.3)
    step_duration: float = 2.0
    turn_speed: float = 0.1
    fillet_radius: float = 0.3
    waypoints: tuple = ()

    def __post_init__(self):
        if isinstance(self.kind, str):
            try:
                self.kind = Task(self.kind)
            except ValueError:
                raise ConfigError(f"unknown task {self.kind!r}") from None


DEFAULT_OBSTACLE_WAYPOINTS = ((0.0, 0.0), (1.2, 0.0), (1.2 + 0.9, 0.9), (3.6, 0.9))
# discs on the straight-ahead continuation past each turn, about 0.45 m clear of the path
DEFAULT_OBSTACLES = (((2.2, 0.0), 0.25), ((2.5, 1.55), 0.2))


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    task: TaskSpec = field(default_factory=TaskSpec)
    controller: Controller = Controller.HIERARCHICAL
    duration: float | None = None
    object_params: ObjectParams = field(default_factory=ObjectParams)
    robot_params: RobotParams = field(default_factory=RobotParams)
    object_mpc: ObjectMpcConfig = field(default_factory=ObjectMpcConfig)
    loco_mpc: LocoMpcConfig = field(default_factory=LocoMpcConfig)
    plant: PlantConfig = field(default_factory=PlantConfig)
    gait: GaitTable = field(default_factory=GaitTable)
    heuristic: HeuristicConfig = field(default_factory=HeuristicConfig)
    obstacles: list | None = None  # None: the task's default set
    seed: int = 0
    box_heading0: float = 0.0
    box_lateral0: float = 0.0
    f_push: float | None = None
    measurement_noise: float = 0.0
    record_timing: bool = True
    end_slack: float = 3.0

    def __post_init__(self):
        if isinstance(self.controller, str):
            try:
                self.controller = Controller(self.controller)
            except ValueError:
                raise ConfigError(f"unknown controller {self.controller!r}") from None

    @property
    def obstacle_list(self) -> list:
        if self.obstacles is not None:
            return list(self.obstacles)
        if self.task.kind is Task.OBSTACLE_PATH and not self.task.waypoints:
            return list(DEFAULT_OBSTACLES)
        return []

    @property
    def push_force(self) -> float:
        return self.f_push if self.f_push is not None else self.object_params.friction_force + 5.0

    def run_duration(self, ref: ReferenceTrajectory) -> float:
        return self.duration if self.duration is not None else ref.t_end + self.end_slack

    def validate(self) -> None:
        if self.duration is not None and not self.duration > 0:
            raise ConfigError("duration must be positive")
        try:
            self.object_mpc.validate(self.object_params)
            self.loco_mpc.validate()
            self.plant.validate(self.object_mpc.dt)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if abs(self.object_mpc.dt - self.loco_mpc.dt) > 1e-12 or self.object_mpc.N != self.loco_mpc.N:
            raise ConfigError("both MPCs must share the horizon length and sampling time")
        ratio = self.object_mpc.dt / self.plant.dt_plant
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("control period must be an integer multiple of dt_plant")
        for ob in self.obstacle_list:
            if len(ob) != 2 or len(ob[0]) != 2 or ob[1] <= 0:
                raise ConfigError(f"bad obstacle {ob!r}")


# ----------------------------------------------------------------------------- references

def _path_reference(segments, times_dt=REF_SAMPLE_DT) -> ReferenceTrajectory:
    """Sample a path of ('line', start, heading, length, speed) / ('arc', ...) segments."""
    ts, psis, ps, oms, vs = [], [], [], [], []
    t0 = 0.0
    for seg in segments:
        kind = seg[0]
        if kind == "line":
            _, start, heading, length, speed = seg
            T = length / speed
            tt = np.arange(0.0, T, times_dt)
            d = np.array([math.cos(heading), math.sin(heading)])
            for t in tt:
                ts.append(t0 + t)
                psis.append(heading)
                ps.append(np.asarray(start) + d * speed * t)
                oms.append(0.0)
                vs.append(d * speed)
        else:
            _, center, radius, th0, sweep, speed = seg
            T = abs(sweep) * radius / speed
            w = math.copysign(speed / radius, sweep)
            tt = np.arange(0.0, T, times_dt)
            for t in tt:
                th = th0 + w * t
                ts.append(t0 + t)
                # heading is tangent to the arc
                psi = th + math.copysign(math.pi / 2, sweep)
                psis.append(psi)
                ps.append(np.asarray(center) + radius * np.array([math.cos(th), math.sin(th)]))
                oms.append(w)
                vs.append(speed * np.array([math.cos(psi), math.sin(psi)]))
        t0 += T
    # closing sample: endpoint reached, at rest
    last = segments[-1]
    if last[0] == "line":
        _, start, heading, length, _ = last
        end = np.asarray(start) + length * np.array([math.cos(heading), math.sin(heading)])
        end_psi = heading
    else:
        _, center, radius, th0, sweep, _ = last
        end = np.asarray(center) + radius * np.array([math.cos(th0 + sweep), math.sin(th0 + sweep)])
        end_psi = th0 + sweep + math.copysign(math.pi / 2, sweep)
    ts.append(t0)
    psis.append(end_psi)
    ps.append(end)
    oms.append(0.0)
    vs.append(np.zeros(2))
    return ReferenceTrajectory(ts, psis, np.array(ps), oms, np.array(vs))


def _polyline_segments(waypoints, speed, turn_speed, fillet):
    """Lines at ``speed`` joined by fillet arcs driven at ``turn_speed``."""
    pts = [np.asarray(p, dtype=float) for p in waypoints]
    if len(pts) < 2:
        raise ConfigError("a path needs at least two waypoints")
    headings = []
    for a, b in zip(pts[:-1], pts[1:]):
        d = b - a
        if np.linalg.norm(d) == 0:
            raise ConfigError("repeated waypoint")
        headings.append(math.atan2(d[1], d[0]))
    segs = []
    cursor = pts[0]
    for i in range(len(pts) - 1):
        end = pts[i + 1]
        heading = headings[i]
        d = np.array([math.cos(heading), math.sin(heading)])
        trim = 0.0
        if i + 1 < len(headings):
            turn = wrap_angle(headings[i + 1] - heading)
            trim = fillet * math.tan(abs(turn) / 2.0) if abs(turn) > 1e-9 else 0.0
        length = float(np.linalg.norm(end - cursor)) - trim
        if length < -1e-9:
            raise ConfigError("fillet radius too large for the waypoint spacing")
        if length > 1e-9:
            segs.append(("line", cursor.copy(), heading, length, speed))
        cursor = cursor + d * max(length, 0.0)
        if trim > 0:
            turn = wrap_angle(headings[i + 1] - heading)
            normal = np.array([-d[1], d[0]]) * math.copysign(1.0, turn)
            center = cursor + normal * fillet
            th0 = math.atan2(cursor[1] - center[1], cursor[0] - center[0])
            segs.append(("arc", center, fillet, th0, turn, turn_speed))
            cursor = center + fillet * np.array([math.cos(th0 + turn), math.sin(th0 + turn)])
    return segs


def make_reference(task: TaskSpec) -> ReferenceTrajectory:
    kind = task.kind
    if kind is Task.STRAIGHT_LINE:
        return _path_reference([("line", np.zeros(2), 0.0, task.length, task.speed)])
    if kind is Task.VELOCITY_STEPS:
        ts, xs, vs = [], [], []
        x = 0.0
        n = int(round(task.step_duration / REF_SAMPLE_DT))
        for level in task.levels:
            for j in range(n):
                ts.append(len(ts) * REF_SAMPLE_DT)
                xs.append(x)
                vs.append(level)
                x += level * REF_SAMPLE_DT
        ts.append(len(ts) * REF_SAMPLE_DT)
        xs.append(x)
        vs.append(0.0)
        m = len(ts)
        pos = np.column_stack([xs, np.zeros(m)])
        vel = np.column_stack([vs, np.zeros(m)])
        return ReferenceTrajectory(ts, np.zeros(m), pos, np.zeros(m), vel)
    if kind is Task.QUARTER_CIRCLE:
        R = task.radius
        return _path_reference([("arc", np.array([0.0, R]), R, -math.pi / 2, math.pi / 2, task.speed)])
    if kind is Task.OBSTACLE_PATH:
        wps = task.waypoints or DEFAULT_OBSTACLE_WAYPOINTS
        return _path_reference(_polyline_segments(wps, task.speed, task.turn_speed, task.fillet_radius))
    if kind is Task.CUSTOM:
        if not task.waypoints:
            raise ConfigError("Custom task needs waypoints")
        return _path_reference(_polyline_segments(task.waypoints, task.speed, task.speed, task.fillet_radius))
    raise ConfigError(f"unknown task {kind!r}")


# ----------------------------------------------------------------------------- files

def _schema() -> dict:
    text = resources.files("quadpush.harness").joinpath("scenario.schema.json").read_text()
    return json.loads(text)


def _set_dotted(doc: dict, key: str, value) -> None:
    parts = key.split(".")
    cur = doc
    for p in parts[:-1]:
        nxt = cur.get(p)
        if nxt is None:
            nxt = cur[p] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"override {key!r} descends into a non-mapping")
        cur = nxt
    cur[parts[-1]] = value


def apply_overrides(doc: dict, overrides) -> dict:
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        _set_dotted(doc, key.strip(), yaml.safe_load(raw))
    return doc


def _build(cls, data, name):
    if data is None:
        return cls()
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"scenario schema violation: {exc.message}") from None
    task = _build(TaskSpec, doc.get("task"), "task")
    robot = doc.get("robot")
    if robot is not None:
        robot = dict(robot)
        for key in ("inertia_body", "hip_offsets"):
            if key in robot:
                robot[key] = np.asarray(robot[key], dtype=float)
    init = doc.get("initial") or {}
    obstacles = None
    if doc.get("obstacles") is not None:
        obstacles = [(tuple(o["center"]), float(o["radius"])) for o in doc["obstacles"]]
    cfg = ScenarioConfig(
        name=doc.get("name", "scenario"),
        task=task,
        controller=doc.get("controller", "Hierarchical"),
        duration=doc.get("duration"),
        object_params=_build(ObjectParams, doc.get("object"), "object"),
        robot_params=_build(RobotParams, robot, "robot"),
        object_mpc=_build(ObjectMpcConfig, doc.get("object_mpc"), "object_mpc"),
        loco_mpc=_build(LocoMpcConfig, doc.get("loco_mpc"), "loco_mpc"),
        plant=_build(PlantConfig, doc.get("plant"), "plant"),
        gait=_build(GaitTable, doc.get("gait"), "gait"),
        heuristic=_build(HeuristicConfig, doc.get("heuristic"), "heuristic"),
        obstacles=obstacles,
        seed=int(doc.get("seed", 0)),
        box_heading0=float(init.get("box_heading", 0.0)),
        box_lateral0=float(init.get("box_lateral", 0.0)),
        f_push=doc.get("f_push"),
        measurement_noise=float(doc.get("measurement_noise", 0.0)),
        record_timing=bool(doc.get("record_timing", True)),
    )
    cfg.validate()
    return cfg


def load_scenario(path, overrides=None) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: scenario must be a mapping")
    return scenario_from_dict(apply_overrides(doc, overrides))


def with_controller(cfg: ScenarioConfig, controller: Controller) -> ScenarioConfig:
    return replace(cfg, controller=controller, name=f"{cfg.name}-{controller.value.lower()}")
