from leaper.baselines.cartpole import (
    OracleDistribution,
    cartpole_ilqr,
    cartpole_oracle_distribution,
    kl_divergence,
    state_histogram,
)
from leaper.baselines.ilqr import ILQRFailed, ILQRProblem, ILQRSolution, ilqr_solve
from leaper.baselines.tracking import (
    CONTROLLER_KINDS,
    TrackingCostWeights,
    ilqr_controller,
    ilqr_track,
    openloop_rollout,
    velocity_feedback_rollout,
)

__all__ = [
    "CONTROLLER_KINDS",
    "ILQRFailed",
    "ILQRProblem",
    "ILQRSolution",
    "OracleDistribution",
    "TrackingCostWeights",
    "cartpole_ilqr",
    "cartpole_oracle_distribution",
    "ilqr_controller",
    "ilqr_solve",
    "ilqr_track",
    "kl_divergence",
    "openloop_rollout",
    "state_histogram",
    "velocity_feedback_rollout",
]
