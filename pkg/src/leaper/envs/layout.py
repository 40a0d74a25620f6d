"""Tabletop layout files: entity shapes, start poses and the goal disc."""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from leaper.geometry import ConvexShape, SE2Pose
from leaper.physics.state import Scene, WorldState, max_penetration

LAYOUT_SCHEMA_VERSION = 1
BUILTIN_LAYOUTS = ("layout1", "layout2", "layout3", "reduced")


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class Goal:
    center: tuple[float, float]
    radius: float = 0.05

    def contains(self, x: float, y: float) -> bool:
        return math.hypot(x - self.center[0], y - self.center[1]) < self.radius


@dataclass(frozen=True)
class Layout:
    name: str
    scene: Scene
    start: WorldState
    goal: Goal
    episode_len: int

    @property
    def n_objects(self) -> int:
        return self.scene.n_objects

    @property
    def object_half_width(self) -> float:
        s = self.scene.object_shapes[self.scene.target_index]
        return s.half_w if s.kind == "box" else s.radius


def _shape(entry: dict, entity_class: str, where: str) -> ConvexShape:
    if "box" in entry:
        hw, hh = entry["box"]
        return ConvexShape.box(float(hw), float(hh), entity_class)
    if "disc" in entry:
        return ConvexShape.disc(float(entry["disc"]), entity_class)
    raise LayoutError(f"{where}: needs a 'box: [half_w, half_h]' or 'disc: radius' entry")


def _pose(entry: dict, where: str) -> SE2Pose:
    try:
        x, y, th = entry["pose"]
    except (KeyError, TypeError, ValueError):
        raise LayoutError(f"{where}: 'pose' must be [x, y, theta]") from None
    return SE2Pose(float(x), float(y), float(th))


def parse_layout(data: dict, source: str = "<layout>") -> Layout:
    if not isinstance(data, dict):
        raise LayoutError(f"{source}: expected a mapping at top level")
    version = data.get("schema_version")
    if version != LAYOUT_SCHEMA_VERSION:
        raise LayoutError(f"{source}: unsupported schema_version {version!r}")
    missing = [k for k in ("name", "robot", "objects", "goal") if k not in data]
    if missing:
        raise LayoutError(f"{source}: missing keys {missing}")

    robot_shape = _shape(data["robot"], "robot", f"{source}: robot")
    robot_pose = _pose(data["robot"], f"{source}: robot")
    objects = data["objects"]
    if not objects:
        raise LayoutError(f"{source}: at least one object is required")
    object_shapes = [_shape(o, "movable", f"{source}: objects[{i}]") for i, o in enumerate(objects)]
    object_poses = [_pose(o, f"{source}: objects[{i}]") for i, o in enumerate(objects)]
    obstacles = [
        (_shape(o, "obstacle", f"{source}: obstacles[{i}]"), _pose(o, f"{source}: obstacles[{i}]"))
        for i, o in enumerate(data.get("obstacles") or [])
    ]
    target = int(data.get("target", 0))
    if not 0 <= target < len(objects):
        raise LayoutError(f"{source}: target index {target} out of range")
    bounds = tuple(float(v) for v in data.get("table", (0.0, 1.0, 0.0, 1.0)))
    goal = Goal(tuple(float(v) for v in data["goal"]["center"]), float(data["goal"].get("radius", 0.05)))
    if not (bounds[0] <= goal.center[0] <= bounds[1] and bounds[2] <= goal.center[1] <= bounds[3]):
        raise LayoutError(f"{source}: goal center lies off the table")

    scene = Scene.on_table(robot_shape, object_shapes, obstacles, target, bounds)
    start = WorldState(robot_pose, tuple(object_poses))
    if max_penetration(start, scene) > 1e-6:
        raise LayoutError(f"{source}: start configuration is in collision")
    return Layout(str(data["name"]), scene, start, goal, int(data.get("episode_len", 50)))


def load_layout(ref: str | int | Path) -> Layout:
    """Load a layout by built-in id (1, 2, 3, "reduced") or by file path."""
    key = str(ref)
    if key in ("1", "2", "3"):
        key = f"layout{key}"
    if key in BUILTIN_LAYOUTS:
        text = resources.files("leaper.layouts").joinpath(f"{key}.yaml").read_text()
        source = key
    else:
        path = Path(ref)
        if not path.is_file():
            raise LayoutError(f"layout file not found: {path}")
        text = path.read_text()
        source = str(path)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise LayoutError(f"{source}: {exc}") from None
    return parse_layout(data, source)
