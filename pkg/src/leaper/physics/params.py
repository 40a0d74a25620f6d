from __future__ import annotations

from dataclasses import fields, replace

import numpy as np

from leaper.physics.state import PhysicsParams

MAX_TRIES = 1000

# Pressure-distribution constant is geometric, not a randomized physical property.
RANDOMIZED_FIELDS = ("mass", "friction_table", "friction_robot", "friction_object", "friction_static")


def _draw(nominal: float, scale: float, rng: np.random.Generator) -> float:
    if scale == 0.0:
        return nominal
    for _ in range(MAX_TRIES):
        v = float(rng.normal(nominal, scale * nominal))
        if v > 0.0:
            return v
    return nominal


def sample_params(nominal: PhysicsParams, rng: np.random.Generator, scale: float = 2.0) -> PhysicsParams:
    """Draw episode physics from Normal(nominal, scale * nominal).

    Nonpositive draws are rejected and redrawn; after ``MAX_TRIES`` failures
    the nominal value is kept. ``scale=0`` returns ``nominal`` unchanged.
    """
    if scale < 0.0:
        raise ValueError("scale must be nonnegative")
    values = {}
    for f in fields(nominal):
        if f.name not in RANDOMIZED_FIELDS:
            continue
        v = getattr(nominal, f.name)
        if isinstance(v, tuple):
            values[f.name] = tuple(_draw(x, scale, rng) for x in v)
        else:
            values[f.name] = _draw(v, scale, rng)
    return replace(nominal, **values)
