"""Training with planned episodic resets, evaluation and learning curves."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from leaper.envs.rearrange import RearrangeEnvConfig, RearrangementEnv, achieved_goal, goal_reward, scale_action
from leaper.geometry import SE2Pose
from leaper.physics import WorldState, max_penetration
from leaper.planner import PlannedTrajectory
from leaper.rl import DDPGAgent, DDPGConfig, ReplayBuffer, Transition, agent_action, ddpg_update, her_relabel
from leaper.rl.ddpg import update_target_networks
from leaper.util import spawn_rngs

RESET_KINDS = ("start", "uniform", "planned", "oracle")
PERTURB_TRIES = 10
PERTURB_SCALE = 1e-3
COLLISION_TOL = 1e-6


@dataclass(frozen=True)
class ResetDistribution:
    """Mixture over reset sources; ``alpha`` is the planned-state weight."""

    alpha: float = 0.0
    uniform: float = 0.0
    oracle: float = 0.0

    def __post_init__(self):
        w = (self.alpha, self.uniform, self.oracle)
        if any(v < 0.0 for v in w) or sum(w) > 1.0 + 1e-12:
            raise ValueError(f"reset weights must be nonnegative and sum to at most 1: {w}")

    @property
    def start(self) -> float:
        return max(0.0, 1.0 - self.alpha - self.uniform - self.oracle)

    @property
    def weights(self) -> dict[str, float]:
        return {"start": self.start, "uniform": self.uniform, "planned": self.alpha, "oracle": self.oracle}

    def draw_kind(self, rng: np.random.Generator) -> str:
        if self.start >= 1.0:
            return "start"  # consume no randomness so alpha = 0 matches plain HER
        u = rng.random()
        acc = 0.0
        for kind in ("planned", "uniform", "oracle"):
            acc += getattr(self, "alpha" if kind == "planned" else kind)
            if u < acc:
                return kind
        return "start"


def sample_initial_state(
    dist: ResetDistribution,
    planned: PlannedTrajectory | Sequence | None,
    rng: np.random.Generator,
    start=None,
    uniform_fn: Callable[[np.random.Generator], object] | None = None,
    oracle_states: Sequence | None = None,
):
    """Draw an episode's initial state from the reset mixture."""
    if dist.alpha > 0.0 and planned is None:
        raise ValueError("planned resets requested without a planned trajectory")
    kind = dist.draw_kind(rng)
    if kind == "planned":
        states = planned.states if isinstance(planned, PlannedTrajectory) else planned
        s = states[int(rng.integers(len(states)))]
        return replace(s.at_rest(), weld=None) if isinstance(s, WorldState) else s
    if kind == "uniform":
        if uniform_fn is None:
            raise ValueError("uniform resets requested without a sampler")
        return uniform_fn(rng)
    if kind == "oracle":
        if not oracle_states:
            raise ValueError("oracle resets requested without oracle states")
        return oracle_states[int(rng.integers(len(oracle_states)))]
    return start


def uniform_rearrangement_state(config: RearrangeEnvConfig, rng: np.random.Generator, max_tries: int = 1000) -> WorldState:
    """Rejection-sample collision-free uniform poses on the table."""
    layout = config.layout
    xmin, xmax, ymin, ymax = layout.scene.bounds
    n = 1 + layout.n_objects
    for _ in range(max_tries):
        q = [SE2Pose(rng.uniform(xmin, xmax), rng.uniform(ymin, ymax), rng.uniform(-math.pi, math.pi)) for _ in range(n)]
        s = WorldState(q[0], tuple(q[1:]))
        if max_penetration(s, layout.scene) <= COLLISION_TOL:
            return s
    return layout.start


def _lift(s0: WorldState, config: RearrangeEnvConfig, rng: np.random.Generator) -> WorldState:
    """Zero the twists; nudge by up to 1 mm if in collision, else fall back to the start."""
    scene = config.layout.scene
    s0 = replace(s0.at_rest(), weld=None)
    if max_penetration(s0, scene) <= COLLISION_TOL:
        return s0
    for _ in range(PERTURB_TRIES):
        poses = [SE2Pose(p.x + d[0], p.y + d[1], p.theta) for p, d in zip(s0.poses, rng.uniform(-PERTURB_SCALE, PERTURB_SCALE, (len(s0.poses), 2)))]
        s = WorldState(poses[0], tuple(poses[1:]))
        if max_penetration(s, scene) <= COLLISION_TOL:
            return s
    return config.layout.start


@dataclass(frozen=True)
class TrainConfig:
    env: RearrangeEnvConfig
    ddpg: DDPGConfig = DDPGConfig()
    resets: ResetDistribution = ResetDistribution()
    episodes: int = 1000
    eval_interval: int = 50
    eval_episodes: int = 20
    seed: int = 0
    config_id: str = "default"

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError("episodes must be nonnegative")
        if self.eval_interval < 1 or self.eval_episodes < 1:
            raise ValueError("eval_interval and eval_episodes must be positive")


@dataclass
class LearningCurve:
    episodes: list[int] = field(default_factory=list)
    success: list[float] = field(default_factory=list)
    seed: int = 0
    config_id: str = ""

    def append(self, episode: int, rate: float) -> None:
        if self.episodes and episode <= self.episodes[-1]:
            raise ValueError("curve episodes must increase")
        if not 0.0 <= rate <= 1.0:
            raise ValueError("success rate must lie in [0, 1]")
        self.episodes.append(int(episode))
        self.success.append(float(rate))

    def rows(self):
        return [(e, s, self.seed, self.config_id) for e, s in zip(self.episodes, self.success)]


def rollout_episode(env: RearrangementEnv, agent: DDPGAgent, s0: WorldState | None, rng: np.random.Generator, explore: bool = True) -> list[Transition]:
    _, obs = env.reset(s0)
    goal = env.goal_vector
    tidx = env.scene.target_index
    episode = []
    done = False
    while not done:
        a = agent_action(agent, obs, goal, explore, rng)
        state, obs2, r, done = env.step(scale_action(a, env.config.action_limits))
        episode.append(Transition(obs, goal, np.asarray(a, dtype=float), r, obs2, done, achieved_goal(state, tidx)))
        obs = obs2
    return episode


def evaluate(policy, env_config: RearrangeEnvConfig, n: int, rng: np.random.Generator) -> float:
    """Success rate of the greedy policy from the canonical start.

    ``policy`` is a DDPGAgent or any callable ``(obs, goal) -> action in [-1, 1]^3``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    act = (lambda o, g: policy.policy(o, g)) if isinstance(policy, DDPGAgent) else policy
    env = RearrangementEnv(env_config, rng)
    wins = 0
    for _ in range(n):
        _, obs = env.reset()
        goal = env.goal_vector
        done = False
        ok = False
        while not done:
            _, obs, r, done = env.step(scale_action(act(obs, goal), env_config.action_limits))
            ok = ok or r == 0.0
        wins += ok
    return wins / n


def train(config: TrainConfig, planned: PlannedTrajectory | None = None, callback=None) -> tuple[DDPGAgent, LearningCurve]:
    """Train a goal-conditioned DDPG+HER agent with mixed episodic resets."""
    if config.resets.alpha > 0.0 and planned is None:
        raise ValueError("alpha > 0 needs a planned trajectory")
    rngs = spawn_rngs(config.seed, ("env", "agent", "explore", "reset", "her", "batch", "eval"))
    env_cfg = config.env
    dcfg = config.ddpg
    env = RearrangementEnv(env_cfg, rngs["env"])
    obs_dim, goal_dim, act_dim = env_cfg.obs_dim, 2, 3
    agent = DDPGAgent(obs_dim, goal_dim, act_dim, dcfg, rngs["agent"])
    buffer = ReplayBuffer(min(dcfg.buffer_size, config.episodes * env_cfg.episode_len * (1 + dcfg.her_k) + 1), obs_dim, goal_dim, act_dim)
    curve = LearningCurve(seed=config.seed, config_id=config.config_id)
    radius = env_cfg.goal_radius
    reward_fn = lambda ach, g: goal_reward(ach, g, radius)
    uniform_fn = lambda rng: uniform_rearrangement_state(env_cfg, rng)

    for ep in range(1, config.episodes + 1):
        s0 = sample_initial_state(config.resets, planned, rngs["reset"], env_cfg.layout.start, uniform_fn)
        s0 = _lift(s0, env_cfg, rngs["reset"])
        episode = rollout_episode(env, agent, s0, rngs["explore"])
        relabeled = her_relabel(episode, dcfg.her_k, rngs["her"], reward_fn)
        agent.o_norm.update(np.array([t.obs for t in episode] + [episode[-1].next_obs]))
        agent.g_norm.update(np.array([t.goal for t in relabeled]))
        buffer.extend(relabeled)
        for _ in range(dcfg.updates_per_cycle):
            ddpg_update(agent, buffer.sample(dcfg.batch_size, rngs["batch"]), update_targets=False)
        update_target_networks(agent)
        if ep % config.eval_interval == 0:
            rate = evaluate(agent.snapshot(), env_cfg, config.eval_episodes, rngs["eval"])
            curve.append(ep, rate)
            if callback is not None:
                callback(ep, rate)
    return agent, curve


def first_crossing(curve: LearningCurve, threshold: float = 0.8) -> float:
    for e, s in zip(curve.episodes, curve.success):
        if s >= threshold:
            return float(e)
    return math.inf


def _percentile(values: Sequence[float], q: float) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    pos = (len(v) - 1) * q / 100.0
    lo, hi = int(math.floor(pos)), int(math.ceil(pos))
    if math.isinf(v[hi]):
        return math.inf
    return float(v[lo] + (v[hi] - v[lo]) * (pos - lo))


def episodes_to_threshold(curves: Sequence[LearningCurve], threshold: float = 0.8) -> tuple[float, float, float]:
    """(median, 20th, 80th percentile) of first-crossing episodes; inf if never reached."""
    if not curves:
        raise ValueError("need at least one curve")
    xs = [first_crossing(c, threshold) for c in curves]
    return _percentile(xs, 50), _percentile(xs, 20), _percentile(xs, 80)


@dataclass(frozen=True)
class CartPoleStudyConfig:
    episodes: int = 1000
    eval_interval: int = 50
    eval_rollouts: int = 10
    oracle_rollouts: int = 50
    # Small nets with many updates per episode learn fastest per CPU-second here.
    ddpg: DDPGConfig = DDPGConfig(
        hidden=(32, 32), batch_size=128, lr_actor=1e-3, lr_critic=1e-3, action_l2=0.0, updates_per_cycle=80
    )
    uniform_box: tuple[tuple[float, float], ...] = ((-0.5, 1.5), (-1.0, 1.0), (-0.3, 0.3), (-1.0, 1.0))


# The three panels of the reset-mixing study plus the start-only reference.
MIXING_GRID = {
    "S": ResetDistribution(),
    "U+S": ResetDistribution(uniform=0.5),
    "O+S": ResetDistribution(oracle=0.5),
    "O+U": ResetDistribution(uniform=0.25, oracle=0.25),  # start weight held at 0.5
}


def _cartpole_goal_reward(params):
    # Goals are cart positions; being upright is required for every goal.
    def reward(achieved: np.ndarray, goal: np.ndarray) -> float:
        upright = abs(math.remainder(achieved[1], 2.0 * math.pi)) < params.upright_tol
        return 0.0 if upright and abs(achieved[0] - goal[0]) < params.goal_tol else -1.0

    return reward


def _cart_position(achieved: np.ndarray) -> np.ndarray:
    return achieved[:1].copy()


def train_cartpole(
    resets: ResetDistribution,
    oracle,
    config: CartPoleStudyConfig,
    seed: int,
    params=None,
) -> list[tuple[int, float]]:
    """Train on the cart-pole task and return (episode, KL to the oracle occupancy) pairs."""
    from leaper.baselines.cartpole import kl_divergence, sample_start, state_histogram, wrap_state
    from leaper.envs.cartpole import CartPoleEnv, CartPoleParams

    params = params or CartPoleParams()
    rngs = spawn_rngs(seed, ("env", "agent", "explore", "reset", "her", "batch", "eval"))
    env = CartPoleEnv(params, rngs["env"])
    dcfg = config.ddpg
    agent = DDPGAgent(4, 1, 1, dcfg, rngs["agent"])
    buffer = ReplayBuffer(min(dcfg.buffer_size, config.episodes * params.episode_len * (1 + dcfg.her_k) + 1), 4, 1, 1)
    goal = np.array([params.x_goal])
    reward_fn = _cartpole_goal_reward(params)
    box = np.asarray(config.uniform_box)
    uniform_fn = lambda rng: rng.uniform(box[:, 0], box[:, 1])
    oracle_states = list(oracle.states)
    series = []
    for ep in range(1, config.episodes + 1):
        s0 = sample_initial_state(resets, None, rngs["reset"], None, uniform_fn, oracle_states)
        if s0 is None:
            s0 = sample_start(rngs["reset"])
        obs = wrap_state(env.reset(s0))
        episode = []
        done = False
        while not done:
            a = agent_action(agent, obs, goal, True, rngs["explore"])
            s, r, done = env.step(float(a[0]) * params.force_limit)
            s = wrap_state(s)
            episode.append(Transition(obs, goal, np.asarray(a, dtype=float), r, s, done, np.array([s[0], s[2]])))
            obs = s
        relabeled = her_relabel(episode, dcfg.her_k, rngs["her"], reward_fn, _cart_position)
        agent.o_norm.update(np.array([t.obs for t in episode] + [episode[-1].next_obs]))
        agent.g_norm.update(np.array([t.goal for t in relabeled]))
        buffer.extend(relabeled)
        for _ in range(dcfg.updates_per_cycle):
            ddpg_update(agent, buffer.sample(dcfg.batch_size, rngs["batch"]), update_targets=False)
        update_target_networks(agent)
        if ep % config.eval_interval == 0:
            visited = []
            for _ in range(config.eval_rollouts):
                s = env.reset(sample_start(rngs["eval"]))
                visited.append(s)
                for _ in range(params.episode_len):
                    a = agent.policy(wrap_state(s), goal)
                    s, _, _ = env.step(float(a[0]) * params.force_limit)
                    visited.append(s)
            series.append((ep, kl_divergence(state_histogram(np.array(visited)), oracle.histogram)))
    return series


def cartpole_mixing_study(
    grid: dict[str, ResetDistribution] | None = None,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    config: CartPoleStudyConfig = CartPoleStudyConfig(),
    oracle_seed: int = 0,
) -> dict[str, dict[int, list[tuple[int, float]]]]:
    """KL-vs-episodes series for every mixing configuration and seed."""
    from leaper.baselines.cartpole import cartpole_ilqr, cartpole_oracle_distribution

    grid = MIXING_GRID if grid is None else grid
    sol = cartpole_ilqr()
    oracle = cartpole_oracle_distribution(sol, config.oracle_rollouts, np.random.default_rng(oracle_seed))
    return {name: {seed: train_cartpole(dist, oracle, config, seed) for seed in seeds} for name, dist in grid.items()}
