"""Cart-pole with a goal position for the cart, integrated with RK4."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CartPoleParams:
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    gravity: float = 9.8
    force_limit: float = 10.0
    dt: float = 0.02
    x_goal: float = 1.0
    goal_tol: float = 0.1
    upright_tol: float = 0.2
    x_limit: float = 2.4
    fall_angle: float = math.pi / 4
    episode_len: int = 100


def cartpole_deriv(s: np.ndarray, force: float, p: CartPoleParams = CartPoleParams()) -> np.ndarray:
    """Time derivative of (x, x_dot, theta, theta_dot); theta = 0 is upright."""
    _, xd, th, thd = s
    total = p.cart_mass + p.pole_mass
    ml = p.pole_mass * p.half_length
    sin, cos = math.sin(th), math.cos(th)
    temp = (force + ml * thd * thd * sin) / total
    thdd = (p.gravity * sin - cos * temp) / (p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total))
    xdd = temp - ml * thdd * cos / total
    return np.array([xd, xdd, thd, thdd])


def cartpole_step(s, force: float, dt: float | None = None, p: CartPoleParams = CartPoleParams()) -> np.ndarray:
    dt = p.dt if dt is None else dt
    f = min(max(float(force), -p.force_limit), p.force_limit)
    s = np.asarray(s, dtype=float)
    k1 = cartpole_deriv(s, f, p)
    k2 = cartpole_deriv(s + 0.5 * dt * k1, f, p)
    k3 = cartpole_deriv(s + 0.5 * dt * k2, f, p)
    k4 = cartpole_deriv(s + dt * k3, f, p)
    return s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def cartpole_energy(s, p: CartPoleParams = CartPoleParams()) -> float:
    _, xd, th, thd = s
    m, l = p.pole_mass, p.half_length
    kinetic = 0.5 * (p.cart_mass + m) * xd**2 + m * l * xd * thd * math.cos(th) + (2.0 / 3.0) * m * l * l * thd**2
    return kinetic + m * p.gravity * l * math.cos(th)


def cartpole_reward(s, p: CartPoleParams = CartPoleParams(), x_goal: float | None = None) -> float:
    x_goal = p.x_goal if x_goal is None else x_goal
    ok = abs(s[0] - x_goal) < p.goal_tol and abs(math.remainder(s[2], 2 * math.pi)) < p.upright_tol
    return 0.0 if ok else -1.0


class CartPoleEnv:
    """Cart must travel to ``x_goal`` and stay there with the pole up."""

    def __init__(self, params: CartPoleParams = CartPoleParams(), rng: np.random.Generator | None = None):
        self.p = params
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.s = np.zeros(4)
        self.t = 0

    def reset(self, s0=None) -> np.ndarray:
        self.s = np.array(s0, dtype=float) if s0 is not None else self.rng.uniform(-0.05, 0.05, 4)
        self.t = 0
        return self.s.copy()

    def fallen(self) -> bool:
        return abs(math.remainder(self.s[2], 2 * math.pi)) > self.p.fall_angle

    def step(self, force: float):
        # A fallen pole is absorbing: the state freezes and every later step scores -1.
        if self.fallen():
            self.t += 1
            return self.s.copy(), -1.0, self.t >= self.p.episode_len
        s = cartpole_step(self.s, force, p=self.p)
        s[0] = min(max(s[0], -self.p.x_limit), self.p.x_limit)
        if abs(s[0]) >= self.p.x_limit:
            s[1] = 0.0
        self.s = s
        self.t += 1
        return s.copy(), cartpole_reward(s, self.p), self.t >= self.p.episode_len
