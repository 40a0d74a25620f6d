"""Physics-constrained RRT over the product of robot and object SE(2) poses.

Tree extensions propagate sampled robot twists through one of the contact
models, so every edge is dynamically feasible under that model and can be
replayed exactly.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from leaper.envs.layout import Goal, Layout
from leaper.envs.rearrange import ACTION_LIMITS, CONTROL_DT
from leaper.geometry import DEFAULT_CHAR_LENGTH, SE2Pose, Twist2
from leaper.physics import ModelKind, PhysicsParams, Scene, StepRejected, WorldState, max_penetration, step
from leaper.util import atomic_write_text

TRAJECTORY_SCHEMA_VERSION = 1


class PlanningFailed(RuntimeError):
    def __init__(self, message: str, stats: dict):
        super().__init__(message)
        self.stats = stats


@dataclass(frozen=True)
class PlannerConfig:
    model: ModelKind = ModelKind.QUASISTATIC
    goal_bias: float = 0.1
    n_controls: int = 10
    control_duration_range: tuple[float, float] = (0.5, 2.0)
    max_iterations: int = 5000
    target_weight: float = 1.0
    robot_weight: float = 0.5
    other_weight: float = 0.25
    char_length: float = DEFAULT_CHAR_LENGTH
    action_limits: tuple[float, float, float] = ACTION_LIMITS
    step_dt: float = CONTROL_DT

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind(self.model))
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")
        lo, hi = self.control_duration_range
        if not 0.0 < lo <= hi:
            raise ValueError("control_duration_range must satisfy 0 < lo <= hi")
        if self.n_controls < 0 or self.max_iterations < 0:
            raise ValueError("counts must be nonnegative")

    def weights(self, n_objects: int, target_index: int) -> np.ndarray:
        w = [self.robot_weight] + [self.other_weight] * n_objects
        w[1 + target_index] = self.target_weight
        return np.array(w)


@dataclass(frozen=True)
class PlannedTrajectory:
    states: tuple[WorldState, ...]
    controls: tuple[Twist2, ...]
    durations: tuple[float, ...]
    model: ModelKind
    seed: int | None = None
    layout: str = ""
    stats: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.controls) != len(self.durations) or len(self.states) != len(self.controls) + 1:
            raise ValueError("a trajectory needs one more state than controls")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def total_duration(self) -> float:
        return float(sum(self.durations))

    def to_dict(self) -> dict:
        def enc_state(s: WorldState) -> dict:
            return {
                "robot": list(s.robot_pose),
                "objects": [list(p) for p in s.object_poses],
                "weld": None if s.weld is None else list(s.weld),
            }

        return {
            "schema_version": TRAJECTORY_SCHEMA_VERSION,
            "model": self.model.value,
            "seed": self.seed,
            "layout": self.layout,
            "states": [enc_state(s) for s in self.states],
            "controls": [list(u) for u in self.controls],
            "durations": list(self.durations),
            # Wall-clock time is left out so equal seeds give identical files.
            "stats": {k: v for k, v in self.stats.items() if k != "seconds"},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlannedTrajectory":
        if d.get("schema_version") != TRAJECTORY_SCHEMA_VERSION:
            raise ValueError(f"unsupported trajectory schema_version {d.get('schema_version')!r}")
        states = tuple(
            WorldState(
                SE2Pose(*s["robot"]),
                tuple(SE2Pose(*p) for p in s["objects"]),
                weld=None if s["weld"] is None else SE2Pose(*s["weld"]),
            )
            for s in d["states"]
        )
        return cls(
            states=states,
            controls=tuple(Twist2(*u) for u in d["controls"]),
            durations=tuple(float(t) for t in d["durations"]),
            model=ModelKind(d["model"]),
            seed=d.get("seed"),
            layout=d.get("layout", ""),
            stats=d.get("stats", {}),
        )

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PlannedTrajectory":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read trajectory {path}: {exc}") from None


def propagate(
    q: WorldState,
    u: Twist2,
    duration: float,
    model: ModelKind,
    params: PhysicsParams,
    scene: Scene,
    step_dt: float = CONTROL_DT,
) -> list[WorldState]:
    """States after each ``step_dt`` sub-step of holding ``u`` for ``duration``.

    Raises StepRejected if any sub-step rejects or an entity leaves the table.
    """
    if duration <= 0.0:
        raise ValueError("duration must be positive")
    n = max(1, int(round(duration / step_dt)))
    h = duration / n
    xmin, xmax, ymin, ymax = scene.bounds
    out = []
    s = q
    for _ in range(n):
        s = step(model, s, u, h, params, scene)
        for p in s.poses:
            if not (xmin <= p.x <= xmax and ymin <= p.y <= ymax):
                raise StepRejected("entity left the table")
        out.append(s)
    return out


def _features(s: WorldState) -> np.ndarray:
    return np.array(s.poses, dtype=float)


def _distances(nodes: np.ndarray, q: np.ndarray, weights: np.ndarray, char_length: float) -> np.ndarray:
    d = nodes - q
    pos = np.hypot(d[..., 0], d[..., 1])
    ang = np.abs(np.remainder(d[..., 2] + math.pi, 2.0 * math.pi) - math.pi)
    return (pos + char_length * ang) @ weights


class _Tree:
    def __init__(self, root: WorldState, capacity: int):
        self.states = [root]
        self.parent = [-1]
        self.edge: list[tuple[Twist2, float] | None] = [None]
        self.feat = np.empty((max(capacity, 1) + 1,) + _features(root).shape)
        self.feat[0] = _features(root)

    def __len__(self) -> int:
        return len(self.states)

    def add(self, s: WorldState, parent: int, u: Twist2, duration: float) -> int:
        if len(self.states) == self.feat.shape[0]:
            self.feat = np.concatenate([self.feat, np.empty_like(self.feat)])
        self.feat[len(self.states)] = _features(s)
        self.states.append(s)
        self.parent.append(parent)
        self.edge.append((u, duration))
        return len(self.states) - 1

    def nearest(self, q: np.ndarray, weights: np.ndarray, char_length: float) -> int:
        return int(np.argmin(_distances(self.feat[: len(self.states)], q, weights, char_length)))

    def path(self, idx: int):
        nodes = []
        while idx >= 0:
            nodes.append(idx)
            idx = self.parent[idx]
        nodes.reverse()
        states = tuple(self.states[i] for i in nodes)
        edges = [self.edge[i] for i in nodes[1:]]
        return states, tuple(e[0] for e in edges), tuple(e[1] for e in edges)


class Planner:
    def __init__(self, layout: Layout, config: PlannerConfig, params: PhysicsParams | None = None, goal: Goal | None = None):
        self.layout = layout
        self.scene = layout.scene
        self.config = config
        self.params = params or PhysicsParams.nominal(layout.n_objects, layout.object_half_width)
        self.goal = goal or layout.goal
        self.weights = config.weights(layout.n_objects, self.scene.target_index)
        self.goal_weights = np.zeros_like(self.weights)
        self.goal_weights[1 + self.scene.target_index] = config.target_weight
        lo, hi = config.control_duration_range
        k_lo = max(1, math.ceil(lo / config.step_dt - 1e-9))
        k_hi = max(k_lo, math.floor(hi / config.step_dt + 1e-9))
        self._duration_steps = (k_lo, k_hi)

    def in_goal(self, s: WorldState) -> bool:
        p = s.object_poses[self.scene.target_index]
        return self.goal.contains(p.x, p.y)

    def sample_state(self, rng: np.random.Generator) -> tuple[np.ndarray, bool]:
        """A uniform C-state, or with probability ``goal_bias`` the goal region.

        A goal sample only constrains the target position, so the caller
        measures distance to it on that component alone.
        """
        xmin, xmax, ymin, ymax = self.scene.bounds
        n = 1 + self.scene.n_objects
        q = np.column_stack([
            rng.uniform(xmin, xmax, n),
            rng.uniform(ymin, ymax, n),
            rng.uniform(-math.pi, math.pi, n),
        ])
        is_goal = rng.random() < self.config.goal_bias
        if is_goal:
            q[1 + self.scene.target_index, :2] = self.goal.center
        return q, is_goal

    def sample_control(self, rng: np.random.Generator) -> tuple[Twist2, float]:
        lim = np.asarray(self.config.action_limits)
        u = Twist2(*(rng.uniform(-1.0, 1.0, 3) * lim).tolist())
        k = int(rng.integers(self._duration_steps[0], self._duration_steps[1] + 1))
        return u, k * self.config.step_dt

    def propagate(self, q: WorldState, u: Twist2, duration: float) -> WorldState:
        return propagate(q, u, duration, self.config.model, self.params, self.scene, self.config.step_dt)[-1]

    def extend(self, tree: _Tree, q_rand: np.ndarray, rng: np.random.Generator, toward_goal: bool = False):
        """Grow ``tree`` toward ``q_rand``; returns the new node index or None."""
        cfg = self.config
        weights, char_length = (self.goal_weights, 0.0) if toward_goal else (self.weights, cfg.char_length)
        near = tree.nearest(q_rand, weights, char_length)
        best = None
        for _ in range(cfg.n_controls):
            u, duration = self.sample_control(rng)
            try:
                s = self.propagate(tree.states[near], u, duration)
            except StepRejected:
                continue
            d = float(_distances(_features(s), q_rand, weights, char_length))
            if best is None or d < best[0]:
                best = (d, s, u, duration)
        if best is None:
            return None
        return tree.add(best[1], near, best[2], best[3])

    def plan(self, start: WorldState, rng: np.random.Generator, seed: int | None = None) -> PlannedTrajectory:
        if max_penetration(start, self.scene) > 1e-6:
            raise ValueError("start state is in collision")
        t0 = time.perf_counter()
        start = replace(start.at_rest(), weld=None)
        tree = _Tree(start, self.config.max_iterations)
        goal_node = 0 if self.in_goal(start) else None
        it = rejected = 0
        while goal_node is None and it < self.config.max_iterations:
            it += 1
            q_rand, toward_goal = self.sample_state(rng)
            idx = self.extend(tree, q_rand, rng, toward_goal)
            if idx is None:
                rejected += 1
            elif self.in_goal(tree.states[idx]):
                goal_node = idx
        stats = {
            "iterations": it,
            "nodes": len(tree),
            "rejected_extensions": rejected,
            "seconds": time.perf_counter() - t0,
        }
        if goal_node is None:
            g = np.asarray(self.goal.center)
            t = tree.feat[: len(tree), 1 + self.scene.target_index, :2]
            stats["closest_target_distance"] = float(np.min(np.linalg.norm(t - g, axis=1)))
            raise PlanningFailed(f"no plan after {it} iterations", stats)
        states, controls, durations = tree.path(goal_node)
        return PlannedTrajectory(states, controls, durations, self.config.model, seed, self.layout.name, stats)


def plan(
    layout: Layout,
    config: PlannerConfig,
    rng: np.random.Generator,
    start: WorldState | None = None,
    seed: int | None = None,
) -> PlannedTrajectory:
    return Planner(layout, config).plan(layout.start if start is None else start, rng, seed)


def replay(traj: PlannedTrajectory, layout: Layout, params: PhysicsParams | None = None) -> list[WorldState]:
    """Re-propagate every edge from its recorded start state."""
    params = params or PhysicsParams.nominal(layout.n_objects, layout.object_half_width)
    return [
        propagate(s, u, d, traj.model, params, layout.scene)[-1]
        for s, u, d in zip(traj.states, traj.controls, traj.durations)
    ]


def densify(traj: PlannedTrajectory, layout: Layout, params: PhysicsParams | None = None, step_dt: float = CONTROL_DT) -> PlannedTrajectory:
    """Split every edge into ``step_dt`` steps, recording each intermediate state."""
    params = params or PhysicsParams.nominal(layout.n_objects, layout.object_half_width)
    states = [traj.states[0]]
    controls, durations = [], []
    for s, u, d in zip(traj.states, traj.controls, traj.durations):
        seg = propagate(s, u, d, traj.model, params, layout.scene, step_dt)
        states.extend(seg)
        controls.extend([u] * len(seg))
        durations.extend([d / len(seg)] * len(seg))
    return PlannedTrajectory(tuple(states), tuple(controls), tuple(durations), traj.model, traj.seed, traj.layout, dict(traj.stats))
