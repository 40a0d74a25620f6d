"""Transitions, the ring-buffer replay memory and hindsight goal relabeling."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Transition:
    """``achieved_next`` is the target position after the step; HER needs it."""

    obs: np.ndarray
    goal: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool
    achieved_next: np.ndarray


class ReplayBuffer:
    FIELDS = ("obs", "goal", "action", "reward", "next_obs", "done")

    def __init__(self, capacity: int, obs_dim: int, goal_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.goal = np.zeros((capacity, goal_dim))
        self.action = np.zeros((capacity, action_dim))
        self.reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, t: Transition) -> None:
        i = self.cursor
        self.obs[i] = t.obs
        self.goal[i] = t.goal
        self.action[i] = t.action
        self.reward[i] = t.reward
        self.next_obs[i] = t.next_obs
        self.done[i] = t.done
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def extend(self, ts) -> None:
        for t in ts:
            self.add(t)

    def ordered_indices(self) -> np.ndarray:
        """Indices of stored items from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.cursor) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, batch_size)
        return {f: getattr(self, f)[idx] for f in self.FIELDS}


RewardFn = Callable[[np.ndarray, np.ndarray], float]


def her_relabel(
    episode: list[Transition],
    k: int,
    rng: np.random.Generator,
    reward_fn: RewardFn,
    goal_of: Callable[[np.ndarray], np.ndarray] | None = None,
) -> list[Transition]:
    """Original transitions plus up to ``k`` copies each with "future" goals.

    A substituted goal is the target position reached at a uniformly drawn
    step at or after the transition, and the reward is recomputed for it.
    ``goal_of`` projects an achieved vector onto goal space when the two differ.
    """
    out = list(episode)
    if k <= 0:
        return out
    n = len(episode)
    for i, t in enumerate(episode):
        for j in rng.integers(i, n, size=k):
            g = episode[j].achieved_next if goal_of is None else goal_of(episode[j].achieved_next)
            out.append(replace(t, goal=g.copy(), reward=float(reward_fn(t.achieved_next, g))))
    return out


class Normalizer:
    """Running mean/std standardization clipped to ``[-clip, clip]``."""

    def __init__(self, size: int, eps: float = 1e-2, clip: float = 5.0):
        self.size = size
        self.eps = eps
        self.clip = clip
        self.count = 0
        self.total = np.zeros(size)
        self.total_sq = np.zeros(size)
        self.mean = np.zeros(size)
        self.std = np.ones(size)

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float).reshape(-1, self.size)
        self.count += x.shape[0]
        self.total += x.sum(axis=0)
        self.total_sq += (x * x).sum(axis=0)
        self.mean = self.total / self.count
        var = np.maximum(self.total_sq / self.count - self.mean**2, 0.0)
        self.std = np.sqrt(np.maximum(var, self.eps**2))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.clip((x - self.mean) / self.std, -self.clip, self.clip)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {"count": np.array(self.count), "total": self.total, "total_sq": self.total_sq}

    def load_state_dict(self, d) -> None:
        self.count = int(d["count"])
        self.total = np.array(d["total"], dtype=float)
        self.total_sq = np.array(d["total_sq"], dtype=float)
        if self.count:
            self.mean = self.total / self.count
            var = np.maximum(self.total_sq / self.count - self.mean**2, 0.0)
            self.std = np.sqrt(np.maximum(var, self.eps**2))
