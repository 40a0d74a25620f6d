from leaper.rl.ddpg import DDPGAgent, DDPGConfig, agent_action, ddpg_update, polyak_update, update_target_networks
from leaper.rl.mlp import MLP, mlp_forward, mlp_gradients
from leaper.rl.optim import AdamState, adam_update
from leaper.rl.replay import Normalizer, ReplayBuffer, Transition, her_relabel

__all__ = [
    "AdamState",
    "DDPGAgent",
    "DDPGConfig",
    "MLP",
    "Normalizer",
    "ReplayBuffer",
    "Transition",
    "adam_update",
    "agent_action",
    "ddpg_update",
    "her_relabel",
    "mlp_forward",
    "mlp_gradients",
    "polyak_update",
    "update_target_networks",
]
