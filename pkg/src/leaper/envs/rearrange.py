"""Goal-conditioned tabletop rearrangement MDP with a sparse {-1, 0} reward."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from leaper.envs.layout import Goal, Layout, load_layout
from leaper.geometry import Twist2
from leaper.physics import ModelKind, PhysicsParams, StepRejected, WorldState, max_penetration, sample_params, step

CONTROL_DT = 0.1
ACTION_LIMITS = (0.25, 0.25, 2.5)
START_TOL = 1e-6


def clamp_action(u, limits=ACTION_LIMITS) -> Twist2:
    return Twist2(*(min(max(float(v), -lim), lim) for v, lim in zip(u, limits)))


def scale_action(a, limits=ACTION_LIMITS) -> Twist2:
    """Map a normalized action in [-1, 1]^3 to a robot twist."""
    return clamp_action([float(v) * lim for v, lim in zip(a, limits)], limits)


def normalize_action(u, limits=ACTION_LIMITS) -> np.ndarray:
    return np.clip(np.asarray(u, dtype=float) / np.asarray(limits), -1.0, 1.0)


@dataclass(frozen=True)
class RearrangeEnvConfig:
    layout: Layout
    nominal: PhysicsParams
    model: ModelKind = ModelKind.DYNAMIC
    episode_len: int = 50
    obs_noise: tuple[float, float] = (0.01, 0.1)
    randomize: bool = True
    goal_radius: float = 0.05
    dt: float = CONTROL_DT
    action_limits: tuple[float, float, float] = ACTION_LIMITS
    randomize_scale: float = 2.0

    @classmethod
    def for_layout(cls, layout: Layout | str | int, **overrides) -> "RearrangeEnvConfig":
        if not isinstance(layout, Layout):
            layout = load_layout(layout)
        base = dict(
            layout=layout,
            nominal=PhysicsParams.nominal(layout.n_objects, layout.object_half_width),
            episode_len=layout.episode_len,
            goal_radius=layout.goal.radius,
        )
        base.update(overrides)
        base["model"] = ModelKind(base.get("model", ModelKind.DYNAMIC))
        return cls(**base)

    @property
    def goal(self) -> Goal:
        return Goal(self.layout.goal.center, self.goal_radius)

    @property
    def obs_dim(self) -> int:
        return 4 * (1 + self.layout.n_objects)


def observe(state: WorldState, noise: tuple[float, float] = (0.0, 0.0), rng: np.random.Generator | None = None) -> np.ndarray:
    """Encode robot and object poses as (x, y, sin theta, cos theta) per entity."""
    poses = np.array(state.poses, dtype=float)
    if noise[0] > 0.0 or noise[1] > 0.0:
        if rng is None:
            raise ValueError("observation noise requires an rng")
        eps = rng.uniform(-1.0, 1.0, size=poses.shape) * np.array([noise[0], noise[0], noise[1]])
        poses = poses + eps
    th = poses[:, 2]
    return np.column_stack([poses[:, 0], poses[:, 1], np.sin(th), np.cos(th)]).ravel()


def decode_observation(obs: np.ndarray) -> list[tuple[float, float, float]]:
    o = np.asarray(obs, dtype=float).reshape(-1, 4)
    return [(x, y, math.atan2(s, c)) for x, y, s, c in o]


def achieved_goal(state: WorldState, target_index: int) -> np.ndarray:
    p = state.object_poses[target_index]
    return np.array([p.x, p.y])


def goal_reward(achieved: np.ndarray, goal: np.ndarray, radius: float) -> np.ndarray | float:
    """0 where the achieved target position lies inside the goal disc, else -1."""
    d = np.linalg.norm(np.asarray(achieved) - np.asarray(goal), axis=-1)
    r = np.where(d < radius, 0.0, -1.0)
    return float(r) if r.ndim == 0 else r


class RearrangementEnv:
    """One environment instance; owns its episode physics and RNG stream."""

    def __init__(self, config: RearrangeEnvConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.params = config.nominal
        self.state = config.layout.start
        self.t = 0

    @property
    def scene(self):
        return self.config.layout.scene

    @property
    def goal_vector(self) -> np.ndarray:
        return np.array(self.config.goal.center, dtype=float)

    def reset(self, s0: WorldState | None = None) -> tuple[WorldState, np.ndarray]:
        cfg = self.config
        if cfg.randomize:
            self.params = sample_params(cfg.nominal, self.rng, cfg.randomize_scale)
        else:
            self.params = cfg.nominal
        if s0 is None:
            s0 = cfg.layout.start
        elif max_penetration(s0, self.scene) > START_TOL:
            raise ValueError("initial state is in collision")
        self.state = replace(s0.at_rest(), weld=None)
        self.t = 0
        return self.state, self.observe()

    def observe(self) -> np.ndarray:
        return observe(self.state, self.config.obs_noise, self.rng)

    def achieved(self) -> np.ndarray:
        return achieved_goal(self.state, self.scene.target_index)

    def reward(self, state: WorldState | None = None) -> float:
        state = self.state if state is None else state
        return goal_reward(achieved_goal(state, self.scene.target_index), self.goal_vector, self.config.goal_radius)

    def step(self, u) -> tuple[WorldState, np.ndarray, float, bool]:
        cfg = self.config
        u = clamp_action(u, cfg.action_limits)
        try:
            self.state = step(cfg.model, self.state, u, cfg.dt, self.params, self.scene)
        except StepRejected:
            # Only the quasi-static style models reject; the robot then holds.
            self.state = self.state.at_rest()
        self.t += 1
        return self.state, self.observe(), self.reward(), self.t >= cfg.episode_len


def env_reset(config: RearrangeEnvConfig, s0: WorldState | None, rng: np.random.Generator):
    env = RearrangementEnv(config, rng)
    state, obs = env.reset(s0)
    return env, state, obs


def env_step(env: RearrangementEnv, u):
    return env.step(u)
