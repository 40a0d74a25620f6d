from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from leaper.geometry import (
    ZERO_TWIST,
    ConvexShape,
    SE2Pose,
    Twist2,
    contact_query,
)

GRAVITY = 9.81


class ModelKind(str, enum.Enum):
    DYNAMIC = "dynamic"
    QUASISTATIC = "quasistatic"
    WELD = "weld"


class StepRejected(RuntimeError):
    """A quasi-static or weld step could not be resolved without penetration."""


@dataclass(frozen=True)
class Scene:
    """Static description of a tabletop: shapes, fixed geometry and the target."""

    robot_shape: ConvexShape
    object_shapes: tuple[ConvexShape, ...]
    static_shapes: tuple[ConvexShape, ...] = ()
    static_poses: tuple[SE2Pose, ...] = ()
    target_index: int = 0
    bounds: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)

    @property
    def n_objects(self) -> int:
        return len(self.object_shapes)

    @classmethod
    def on_table(
        cls,
        robot_shape: ConvexShape,
        object_shapes: Sequence[ConvexShape],
        obstacles: Sequence[tuple[ConvexShape, SE2Pose]] = (),
        target_index: int = 0,
        bounds: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0),
        wall_thickness: float = 0.05,
    ) -> "Scene":
        """Build a scene whose table edges are four ``table_bound`` walls."""
        xmin, xmax, ymin, ymax = bounds
        cx, cy = 0.5 * (xmin + xmax), 0.5 * (ymin + ymax)
        hw, hh = 0.5 * (xmax - xmin), 0.5 * (ymax - ymin)
        t = wall_thickness
        walls = [
            (ConvexShape.box(hw + 2 * t, t, "table_bound"), SE2Pose(cx, ymin - t)),
            (ConvexShape.box(hw + 2 * t, t, "table_bound"), SE2Pose(cx, ymax + t)),
            (ConvexShape.box(t, hh + 2 * t, "table_bound"), SE2Pose(xmin - t, cy)),
            (ConvexShape.box(t, hh + 2 * t, "table_bound"), SE2Pose(xmax + t, cy)),
        ]
        statics = list(obstacles) + walls
        return cls(
            robot_shape=robot_shape,
            object_shapes=tuple(object_shapes),
            static_shapes=tuple(s for s, _ in statics),
            static_poses=tuple(p for _, p in statics),
            target_index=target_index,
            bounds=tuple(bounds),
        )


@dataclass(frozen=True)
class WorldState:
    """Robot pose, movable-object poses and their velocities.

    ``weld`` is the frozen pose of the target in the robot frame once the weld
    model has attached it; ``None`` otherwise.
    """

    robot_pose: SE2Pose
    object_poses: tuple[SE2Pose, ...]
    robot_twist: Twist2 = ZERO_TWIST
    object_twists: tuple[Twist2, ...] = field(default=())
    weld: SE2Pose | None = None

    def __post_init__(self):
        object.__setattr__(self, "object_poses", tuple(self.object_poses))
        if not self.object_twists:
            object.__setattr__(self, "object_twists", (ZERO_TWIST,) * len(self.object_poses))
        else:
            object.__setattr__(self, "object_twists", tuple(self.object_twists))
        if len(self.object_twists) != len(self.object_poses):
            raise ValueError("object_twists and object_poses differ in length")

    @property
    def poses(self) -> tuple[SE2Pose, ...]:
        """The C-state: robot pose followed by the object poses."""
        return (self.robot_pose,) + self.object_poses

    def at_rest(self) -> "WorldState":
        return replace(
            self,
            robot_twist=ZERO_TWIST,
            object_twists=(ZERO_TWIST,) * len(self.object_poses),
        )

    def kinetic_energy(self, params: "PhysicsParams", scene: Scene) -> float:
        e = 0.0
        for tw, m, shape in zip(self.object_twists, params.mass, scene.object_shapes):
            e += 0.5 * m * (tw.vx**2 + tw.vy**2) + 0.5 * m * shape.inertia_per_mass() * tw.omega**2
        return e


@dataclass(frozen=True)
class PhysicsParams:
    """Per-episode physical constants.

    Contact friction is given per entity-pair class: robot/movable,
    movable/movable and movable/static (obstacles and table walls).
    """

    mass: tuple[float, ...]
    friction_table: tuple[float, ...]
    friction_robot: float = 0.5
    friction_object: float = 0.5
    friction_static: float = 0.5
    pressure_moment_const: float = 0.024

    def __post_init__(self):
        object.__setattr__(self, "mass", tuple(float(m) for m in self.mass))
        object.__setattr__(self, "friction_table", tuple(float(m) for m in self.friction_table))
        values = self.mass + self.friction_table + (
            self.friction_robot,
            self.friction_object,
            self.friction_static,
            self.pressure_moment_const,
        )
        if not all(v > 0.0 and math.isfinite(v) for v in values):
            raise ValueError(f"physics parameters must be strictly positive: {self}")
        if len(self.mass) != len(self.friction_table):
            raise ValueError("mass and friction_table must list the same entities")

    @classmethod
    def nominal(cls, n_objects: int, half_width: float = 0.04) -> "PhysicsParams":
        return cls(
            mass=(0.1,) * n_objects,
            friction_table=(0.5,) * n_objects,
            pressure_moment_const=0.6 * half_width,
        )

    def contact_friction(self, class_a: str, class_b: str) -> float:
        pair = {class_a, class_b}
        if "robot" in pair and "movable" in pair:
            return self.friction_robot
        if pair == {"movable"}:
            return self.friction_object
        return self.friction_static


@dataclass(frozen=True)
class LimitSurface:
    """Ellipsoidal limit surface with force and moment saturation values."""

    f_max: float
    m_max: float

    def __post_init__(self):
        if not (self.f_max > 0.0 and self.m_max > 0.0):
            raise ValueError("limit surface extents must be positive")

    @classmethod
    def for_object(cls, mass: float, mu_table: float, c: float) -> "LimitSurface":
        f_max = mu_table * mass * GRAVITY
        return cls(f_max=f_max, m_max=c * f_max)

    def value(self, fx: float, fy: float, m: float) -> float:
        return (fx / self.f_max) ** 2 + (fy / self.f_max) ** 2 + (m / self.m_max) ** 2

    def scale_onto(self, fx: float, fy: float, m: float) -> tuple[float, float, float]:
        k = 1.0 / math.sqrt(self.value(fx, fy, m))
        return fx * k, fy * k, m * k


def max_penetration(state: WorldState, scene: Scene) -> float:
    """Largest penetration depth over every entity pair in the scene."""
    shapes = (scene.robot_shape,) + scene.object_shapes
    poses = state.poses
    worst = 0.0
    n = len(shapes)
    for i in range(n):
        for j in range(i + 1, n):
            m = contact_query(shapes[i], poses[i], shapes[j], poses[j])
            if m is not None:
                worst = max(worst, m.max_penetration)
        for s, p in zip(scene.static_shapes, scene.static_poses):
            m = contact_query(shapes[i], poses[i], s, p)
            if m is not None:
                worst = max(worst, m.max_penetration)
    return worst
