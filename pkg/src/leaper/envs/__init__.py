from leaper.envs.cartpole import CartPoleEnv, CartPoleParams, cartpole_energy, cartpole_reward, cartpole_step
from leaper.envs.layout import BUILTIN_LAYOUTS, Goal, Layout, LayoutError, load_layout, parse_layout
from leaper.envs.rearrange import (
    ACTION_LIMITS,
    CONTROL_DT,
    RearrangeEnvConfig,
    RearrangementEnv,
    achieved_goal,
    clamp_action,
    decode_observation,
    env_reset,
    env_step,
    goal_reward,
    normalize_action,
    observe,
    scale_action,
)

__all__ = [
    "BUILTIN_LAYOUTS",
    "ACTION_LIMITS",
    "CONTROL_DT",
    "CartPoleEnv",
    "CartPoleParams",
    "Goal",
    "Layout",
    "LayoutError",
    "RearrangeEnvConfig",
    "RearrangementEnv",
    "achieved_goal",
    "cartpole_energy",
    "cartpole_reward",
    "cartpole_step",
    "clamp_action",
    "decode_observation",
    "env_reset",
    "env_step",
    "goal_reward",
    "load_layout",
    "normalize_action",
    "observe",
    "parse_layout",
    "scale_action",
]
