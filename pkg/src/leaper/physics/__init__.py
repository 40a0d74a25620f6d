"""Interchangeable planar contact models: dynamic, quasi-static and weld."""
from __future__ import annotations

from leaper.geometry import Twist2
from leaper.physics.dynamic import step_dynamic
from leaper.physics.params import sample_params
from leaper.physics.quasistatic import limit_surface_velocity, step_quasistatic, step_weld
from leaper.physics.state import (
    GRAVITY,
    LimitSurface,
    ModelKind,
    PhysicsParams,
    Scene,
    StepRejected,
    WorldState,
    max_penetration,
)

_STEPPERS = {
    ModelKind.DYNAMIC: step_dynamic,
    ModelKind.QUASISTATIC: step_quasistatic,
    ModelKind.WELD: step_weld,
}


def step(model: ModelKind | str, state: WorldState, u: Twist2, dt: float, params: PhysicsParams, scene: Scene) -> WorldState:
    return _STEPPERS[ModelKind(model)](state, u, dt, params, scene)


__all__ = [
    "GRAVITY",
    "LimitSurface",
    "ModelKind",
    "PhysicsParams",
    "Scene",
    "StepRejected",
    "WorldState",
    "limit_surface_velocity",
    "max_penetration",
    "sample_params",
    "step",
    "step_dynamic",
    "step_quasistatic",
    "step_weld",
]
