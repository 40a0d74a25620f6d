"""Optimal (iLQR) cart-pole policy and its state-visitation distribution."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from leaper.baselines.ilqr import ILQRProblem, ILQRSolution, ilqr_solve
from leaper.envs.cartpole import CartPoleParams, cartpole_step

# Histogram grid over (x, x_dot, theta, theta_dot); theta is wrapped first.
KL_BOUNDS = ((-2.4, 2.4), (-3.0, 3.0), (-math.pi, math.pi), (-6.0, 6.0))
KL_BINS = 20
KL_SMOOTHING = 1e-6


def wrap_state(s: np.ndarray) -> np.ndarray:
    s = np.array(s, dtype=float)
    s[..., 2] = np.remainder(s[..., 2] + math.pi, 2.0 * math.pi) - math.pi
    return s


def state_histogram(states, bins: int = KL_BINS, bounds=KL_BOUNDS) -> np.ndarray:
    """Normalized occupancy over the fixed grid; states outside land in edge bins."""
    s = wrap_state(np.atleast_2d(np.asarray(states, dtype=float)))
    idx = []
    for d, (lo, hi) in enumerate(bounds):
        i = np.floor((s[:, d] - lo) / (hi - lo) * bins).astype(int)
        idx.append(np.clip(i, 0, bins - 1))
    h = np.zeros((bins,) * len(bounds))
    np.add.at(h, tuple(idx), 1.0)
    return h / h.sum()


def kl_divergence(p: np.ndarray, q: np.ndarray, smoothing: float = KL_SMOOTHING) -> float:
    """KL(p || q) after adding ``smoothing`` to every bin and renormalizing."""
    p = np.asarray(p, dtype=float).ravel() + smoothing
    q = np.asarray(q, dtype=float).ravel() + smoothing
    p /= p.sum()
    q /= q.sum()
    return float(np.sum(p * np.log(p / q)))


def cartpole_ilqr(
    params: CartPoleParams = CartPoleParams(),
    horizon: int | None = None,
    x0=(0.0, 0.0, 0.0, 0.0),
    Q=(1.0, 0.1, 10.0, 0.1),
    R: float = 0.01,
    terminal_scale: float = 100.0,
    max_iterations: int = 200,
) -> ILQRSolution:
    """Drive the cart to ``x_goal`` with the pole upright."""
    T = params.episode_len if horizon is None else horizon
    lim = params.force_limit

    def dynamics(x, u):
        return cartpole_step(x, float(np.clip(u[0], -lim, lim)), p=params)

    goal = np.array([params.x_goal, 0.0, 0.0, 0.0])
    problem = ILQRProblem(
        dynamics=dynamics,
        x0=np.asarray(x0, dtype=float),
        u_init=np.zeros((T, 1)),
        Q=np.diag(Q),
        R=np.array([[R]]),
        Qf=terminal_scale * np.diag(Q),
        x_ref=np.tile(goal, (T + 1, 1)),
    )
    return ilqr_solve(problem, max_iterations=max_iterations)


def ilqr_policy_rollout(sol: ILQRSolution, s0, params: CartPoleParams = CartPoleParams()) -> np.ndarray:
    lim = params.force_limit
    states = [np.asarray(s0, dtype=float)]
    for t in range(len(sol.us)):
        u = float(np.clip(sol.control(t, states[-1])[0], -lim, lim))
        states.append(cartpole_step(states[-1], u, p=params))
    return np.array(states)


@dataclass(frozen=True)
class OracleDistribution:
    histogram: np.ndarray
    states: np.ndarray


def sample_start(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-0.05, 0.05, 4)


def cartpole_oracle_distribution(
    sol: ILQRSolution, n: int, rng: np.random.Generator, params: CartPoleParams = CartPoleParams()
) -> OracleDistribution:
    """Occupancy of the iLQR feedback policy rolled out from the start distribution."""
    if n < 1:
        raise ValueError("n must be at least 1")
    visited = np.concatenate([ilqr_policy_rollout(sol, sample_start(rng), params) for _ in range(n)])
    return OracleDistribution(state_histogram(visited), visited)
