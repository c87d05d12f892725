"""Scene configuration: robot, tool, slider, anchor, table, goal poses and thresholds.

The configuration is a YAML file (see ``data/default_scene.yaml`` for the
documented schema). ``load_scene`` merges a user file over the defaults so a
scene file only needs the fields it changes.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .collision import SceneObstacles
from .geometry import Box, Pose, pose_from_axes, rot_x, rot_z
from .grasps import BoxPart, GripperSpec, ObjectShape, generate_grasps, load_grasp_db
from .kinematics import make_arm

# tool x down, bending-plane normal (tool z) along world +x
TOOL_REFERENCE = np.column_stack([[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    text = resources.files("tetherplan").joinpath("data/default_scene.yaml").read_text()
    return yaml.safe_load(text)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("goals", "benchmarks"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def tool_pose(spec: dict) -> Pose:
    """Pose from a {position, tilt, yaw} mapping (or an explicit 3x3 ``rotation``)."""
    pos = np.asarray(spec["position"], float)
    if "rotation" in spec:
        return Pose(np.asarray(spec["rotation"], float), pos)
    R = rot_z(float(spec.get("yaw", 0.0))) @ rot_x(float(spec.get("tilt", 0.0))) @ TOOL_REFERENCE
    return Pose(R, pos)


def _vec(v, n=3, what="vector"):
    a = np.asarray(v, float)
    if a.shape != (n,):
        raise ConfigError(f"{what} must have {n} numbers, got {v!r}")
    return a


@dataclass
class Scene:
    config: dict
    robot: dict
    tool_arm: str
    cable_arm: str
    gripper: GripperSpec
    tool: ObjectShape
    tool_tail: np.ndarray
    beta: float
    slider: ObjectShape
    obstacles: SceneObstacles
    anchor_mode: str
    anchor: np.ndarray
    start: Pose
    goals: dict
    benchmarks: dict
    exchange: Pose
    grasps: dict = field(default_factory=dict)

    @property
    def thresholds(self) -> dict:
        return self.config["thresholds"]

    @property
    def planner(self) -> dict:
        return self.config["planner"]

    @property
    def seed(self) -> int:
        return int(self.config.get("seed", 0))

    @property
    def min_height(self) -> float:
        return float(self.thresholds["min_height"])

    def arm(self, role: str):
        return self.robot[self.tool_arm if role == "tool" else self.cable_arm]

    def slider_rest(self) -> Pose:
        """Slider resting on the straight cable behind the start pose, hole axis along the cable.

        It sits ``alpha_s`` from the tool origin measured along the cable (the
        tail offset plus the stretch of cable beyond the tail).
        """
        tail = self.start.apply(self.tool_tail)
        d = self.anchor - tail
        d = d / np.linalg.norm(d)
        along = max(float(self.thresholds["alpha_s"]) - float(np.linalg.norm(self.tool_tail)), 1.0)
        return pose_from_axes(d, origin=tail + along * d)

    def with_obstacles(self, boxes) -> "Scene":
        return _replace(self, obstacles=self.obstacles.with_boxes(boxes))

    def balancerless(self) -> "Scene":
        """Same scene with the cable fixed to the table corner."""
        cfg = copy.deepcopy(self.config)
        cfg["anchor"]["mode"] = "table-corner"
        cfg["thresholds"]["min_height"] = cfg["obstacle_trials"]["min_height"]
        return build_scene(cfg, grasps=self.grasps)


def _replace(scene: Scene, **kw) -> Scene:
    d = dict(scene.__dict__)
    d.update(kw)
    return Scene(**d)


def build_scene(cfg: dict, grasps: dict | None = None) -> Scene:
    try:
        rc = cfg["robot"]
        robot = {}
        for name in ("right", "left"):
            robot[name] = make_arm(name, _vec(rc[name]["mount"], what=f"{name} mount"), mirrored=bool(rc[name].get("mirrored", False)))
        tool_arm, cable_arm = rc["tool_arm"], rc["cable_arm"]
        if {tool_arm, cable_arm} != {"right", "left"}:
            raise ConfigError("tool_arm and cable_arm must name the two different arms")
        gripper = GripperSpec(**rc.get("gripper", {}))

        tc = cfg["tool"]
        th = _vec(tc["half_extents"], what="tool half_extents")
        sc = cfg["slider"]
        sh = _vec(sc["half_extents"], what="slider half_extents")
        for h in (th, sh):
            if np.any(h <= 0):
                raise ConfigError("half extents must be strictly positive")
        tool = ObjectShape(tc.get("name", "tool"), (BoxPart(Pose(), tuple(th)),))
        slider = ObjectShape(
            sc.get("name", "slider"),
            (BoxPart(Pose(), tuple(sh), tuple(sc.get("grasp_axes", (0, 1, 2))), tuple(sc.get("approach_axes", (0, 1, 2)))),),
        )
        tail = _vec(tc["tail"], what="tool tail")

        tb = cfg["table"]
        table = Box(Pose.from_translation(_vec(tb["center"])), tuple(_vec(tb["half_extents"])))
        margin = float(cfg["thresholds"]["margin"])
        obstacles = SceneObstacles((), table, margin)

        ac = cfg["anchor"]
        mode = ac.get("mode", "balancer")
        if mode not in ("balancer", "table-corner"):
            raise ConfigError(f"anchor mode must be 'balancer' or 'table-corner', got {mode!r}")
        anchor = _vec(ac["balancer"] if mode == "balancer" else ac["table_corner"], what="anchor")

        goals = {int(k): tool_pose(v) for k, v in cfg["goals"].items()}
        benchmarks = {int(k): [int(g) for g in v] for k, v in cfg["benchmarks"].items()}
        for b, ids in benchmarks.items():
            missing = [g for g in ids if g not in goals]
            if missing:
                raise ConfigError(f"benchmark {b} references unknown goals {missing}")
        start = tool_pose(cfg["start"])
        exchange = tool_pose(cfg["handover"]["exchange"])
        for k in ("alpha_s", "acc", "min_height"):
            float(cfg["thresholds"][k])
        if float(cfg["thresholds"]["alpha_s"]) <= 0:
            raise ConfigError("alpha_s must be positive")
    except KeyError as exc:
        raise ConfigError(f"missing config field {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    if grasps is None:
        if cfg.get("grasp_db"):
            grasps = load_grasp_db(cfg["grasp_db"])
        else:
            grasps = {
                tool.name: generate_grasps(tool, gripper, int(tc.get("grasp_positions", 3))),
                slider.name: generate_grasps(slider, gripper, int(sc.get("grasp_positions", 1))),
            }
    for obj in (tool.name, slider.name):
        if not grasps.get(obj):
            raise ConfigError(f"object {obj!r} has no entry in the grasp database")

    return Scene(
        config=cfg,
        robot=robot,
        tool_arm=tool_arm,
        cable_arm=cable_arm,
        gripper=gripper,
        tool=tool,
        tool_tail=tail,
        beta=float(tc.get("beta", 60.0)),
        slider=slider,
        obstacles=obstacles,
        anchor_mode=mode,
        anchor=anchor,
        start=start,
        goals=goals,
        benchmarks=benchmarks,
        exchange=exchange,
        grasps=grasps,
    )


def load_scene(path=None, overrides: dict | None = None) -> Scene:
    cfg = default_config()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"scene file not found: {p}")
        try:
            user = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{p} must contain a mapping")
        cfg = _merge(cfg, user)
        if "grasp_db" in user:
            cfg["grasp_db"] = str((p.parent / user["grasp_db"]).resolve())
    if overrides:
        cfg = _merge(cfg, overrides)
    return build_scene(cfg)
