"""Goal-conditioned DDPG: actor, critic, their targets and the update rule."""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from leaper.rl.mlp import MLP, mlp_forward, mlp_gradients
from leaper.rl.optim import AdamState, adam_update
from leaper.rl.replay import Normalizer
from leaper.util import atomic_write_bytes

CHECKPOINT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DDPGConfig:
    hidden: tuple[int, ...] = (256, 256, 256)
    gamma: float = 0.98
    polyak: float = 0.95
    lr_actor: float = 0.01
    lr_critic: float = 0.01
    batch_size: int = 256
    buffer_size: int = 1_000_000
    updates_per_cycle: int = 40
    random_eps: float = 0.3
    noise_eps: float = 0.2
    action_l2: float = 1.0
    clip_obs: float = 200.0
    norm_clip: float = 5.0
    her_k: int = 4

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.polyak <= 1.0:
            raise ValueError("polyak must lie in (0, 1]")
        if not 0.0 <= self.random_eps <= 1.0:
            raise ValueError("random_eps must lie in [0, 1]")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


class DDPGAgent:
    def __init__(self, obs_dim: int, goal_dim: int, action_dim: int, config: DDPGConfig, rng: np.random.Generator):
        self.obs_dim, self.goal_dim, self.action_dim = obs_dim, goal_dim, action_dim
        self.config = config
        h = list(config.hidden)
        self.actor = MLP.create([obs_dim + goal_dim] + h + [action_dim], rng, "tanh")
        self.critic = MLP.create([obs_dim + goal_dim + action_dim] + h + [1], rng, "linear")
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = AdamState.zeros_like(self.actor.params())
        self.critic_opt = AdamState.zeros_like(self.critic.params())
        self.o_norm = Normalizer(obs_dim, clip=config.norm_clip)
        self.g_norm = Normalizer(goal_dim, clip=config.norm_clip)

    def inputs(self, obs: np.ndarray, goal: np.ndarray) -> np.ndarray:
        c = self.config.clip_obs
        o = self.o_norm(np.clip(obs, -c, c))
        g = self.g_norm(np.clip(goal, -c, c))
        return np.concatenate([o, g], axis=-1)

    def policy(self, obs: np.ndarray, goal: np.ndarray) -> np.ndarray:
        return mlp_forward(self.actor, self.inputs(obs, goal))

    def q_value(self, obs: np.ndarray, goal: np.ndarray, action: np.ndarray) -> np.ndarray:
        return mlp_forward(self.critic, np.concatenate([self.inputs(obs, goal), action], axis=-1))[..., 0]

    def snapshot(self) -> "DDPGAgent":
        """Independent copy of the networks and normalizers for evaluation."""
        other = object.__new__(DDPGAgent)
        other.__dict__.update(self.__dict__)
        other.actor = self.actor.copy()
        other.critic = self.critic.copy()
        other.o_norm = Normalizer(self.obs_dim, clip=self.config.norm_clip)
        other.o_norm.load_state_dict(self.o_norm.state_dict())
        other.g_norm = Normalizer(self.goal_dim, clip=self.config.norm_clip)
        other.g_norm.load_state_dict(self.g_norm.state_dict())
        return other

    def save(self, path: str | Path, rng: np.random.Generator | None = None, extra: dict | None = None) -> None:
        header = {
            "schema_version": CHECKPOINT_SCHEMA_VERSION,
            "dims": [self.obs_dim, self.goal_dim, self.action_dim],
            "config": asdict(self.config),
            "actor_opt_t": self.actor_opt.t,
            "critic_opt_t": self.critic_opt.t,
            "rng_state": None if rng is None else rng.bit_generator.state,
            "extra": extra or {},
        }
        arrays = {"header": np.array(json.dumps(header))}
        for name, net in (("actor", self.actor), ("critic", self.critic), ("target_actor", self.target_actor), ("target_critic", self.target_critic)):
            for i, p in enumerate(net.params()):
                arrays[f"{name}/{i}"] = p
        for name, opt in (("actor_opt", self.actor_opt), ("critic_opt", self.critic_opt)):
            for i, (m, v) in enumerate(zip(opt.m, opt.v)):
                arrays[f"{name}/m{i}"] = m
                arrays[f"{name}/v{i}"] = v
        for name, norm in (("o_norm", self.o_norm), ("g_norm", self.g_norm)):
            for k, v in norm.state_dict().items():
                arrays[f"{name}/{k}"] = v
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        atomic_write_bytes(path, buf.getvalue())

    @classmethod
    def load(cls, path: str | Path) -> tuple["DDPGAgent", dict]:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            if header.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
                raise ValueError(f"unsupported checkpoint schema_version {header.get('schema_version')!r}")
            cfg = DDPGConfig(**header["config"])
            agent = cls(*header["dims"], cfg, np.random.default_rng(0))
            for name in ("actor", "critic", "target_actor", "target_critic"):
                net = getattr(agent, name)
                net.set_params([z[f"{name}/{i}"] for i in range(len(net.params()))])
            for name in ("actor_opt", "critic_opt"):
                opt = getattr(agent, name)
                opt.m = [z[f"{name}/m{i}"] for i in range(len(opt.m))]
                opt.v = [z[f"{name}/v{i}"] for i in range(len(opt.v))]
                opt.t = header[f"{name}_t"]
            for name in ("o_norm", "g_norm"):
                getattr(agent, name).load_state_dict({k: z[f"{name}/{k}"] for k in ("count", "total", "total_sq")})
        return agent, header


def agent_action(agent: DDPGAgent, obs: np.ndarray, goal: np.ndarray, explore: bool, rng: np.random.Generator | None = None) -> np.ndarray:
    """Deterministic actor output, or the epsilon-random / Gaussian behavior policy."""
    a = agent.policy(obs, goal)
    if not explore:
        return a
    cfg = agent.config
    if rng.random() < cfg.random_eps:
        return rng.uniform(-1.0, 1.0, agent.action_dim)
    return np.clip(a + cfg.noise_eps * rng.standard_normal(agent.action_dim), -1.0, 1.0)


def polyak_update(target: MLP, source: MLP, polyak: float) -> None:
    target.set_params([polyak * t + (1.0 - polyak) * s for t, s in zip(target.params(), source.params())])


def ddpg_update(agent: DDPGAgent, batch: dict[str, np.ndarray], update_targets: bool = True) -> tuple[float, float]:
    """One critic and one actor Adam step on ``batch``; returns (critic loss, actor loss)."""
    cfg = agent.config
    n = batch["obs"].shape[0]
    if n == 0:
        raise ValueError("empty batch")
    x = agent.inputs(batch["obs"], batch["goal"])
    x2 = agent.inputs(batch["next_obs"], batch["goal"])
    a2 = mlp_forward(agent.target_actor, x2)
    q2 = mlp_forward(agent.target_critic, np.concatenate([x2, a2], axis=1))[:, 0]
    y = np.clip(batch["reward"] + cfg.gamma * q2, -1.0 / (1.0 - cfg.gamma), 0.0)

    cin = np.concatenate([x, batch["action"]], axis=1)
    q, cache = mlp_forward(agent.critic, cin, return_cache=True)
    err = q[:, 0] - y
    critic_loss = float(np.mean(err * err))
    grads, _ = mlp_gradients(agent.critic, cin, (2.0 / n) * err[:, None], cache)
    agent.critic.set_params(adam_update(agent.critic.params(), grads, agent.critic_opt, cfg.lr_critic))

    pi, acache = mlp_forward(agent.actor, x, return_cache=True)
    pin = np.concatenate([x, pi], axis=1)
    qpi, qcache = mlp_forward(agent.critic, pin, return_cache=True)
    actor_loss = float(-np.mean(qpi) + cfg.action_l2 * np.mean(pi * pi))
    _, gin = mlp_gradients(agent.critic, pin, np.full((n, 1), -1.0 / n), qcache)
    g_pi = gin[:, -agent.action_dim:] + (2.0 * cfg.action_l2 / (n * agent.action_dim)) * pi
    agrads, _ = mlp_gradients(agent.actor, x, g_pi, acache)
    agent.actor.set_params(adam_update(agent.actor.params(), agrads, agent.actor_opt, cfg.lr_actor))

    if update_targets:
        update_target_networks(agent)
    return critic_loss, actor_loss


def update_target_networks(agent: DDPGAgent) -> None:
    polyak_update(agent.target_actor, agent.actor, agent.config.polyak)
    polyak_update(agent.target_critic, agent.critic, agent.config.polyak)
