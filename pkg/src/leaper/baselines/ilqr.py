"""Iterative LQR with finite-difference linearization."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Dynamics = Callable[[np.ndarray, np.ndarray], np.ndarray]
StateDiff = Callable[[np.ndarray, np.ndarray], np.ndarray]

LINE_SEARCH = tuple(0.5**i for i in range(11))


class ILQRFailed(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


def _plain_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a - b


@dataclass
class ILQRProblem:
    """Tracking cost sum_t (x-xr)'Q(x-xr) + (u-ur)'R(u-ur) + terminal (x-xr)'Qf(x-xr), halved."""

    dynamics: Dynamics
    x0: np.ndarray
    u_init: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Qf: np.ndarray
    x_ref: np.ndarray | None = None
    u_ref: np.ndarray | None = None
    jacobians: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    state_diff: StateDiff = _plain_diff
    fd_step: float = 1e-5

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.u_init = np.atleast_2d(np.asarray(self.u_init, dtype=float))
        T, m = self.u_init.shape
        n = self.x0.shape[0]
        if T < 1:
            raise ValueError("horizon must be at least 1")
        for name, M, d in (("Q", self.Q, n), ("R", self.R, m), ("Qf", self.Qf, n)):
            M = np.asarray(M, dtype=float)
            if M.shape != (d, d) or not np.allclose(M, M.T):
                raise ValueError(f"{name} must be a symmetric {d}x{d} matrix")
            if np.min(np.linalg.eigvalsh(M)) < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
            setattr(self, name, M)
        if np.min(np.linalg.eigvalsh(self.R)) <= 0.0:
            raise ValueError("R must be positive definite")
        self.x_ref = np.zeros((T + 1, n)) if self.x_ref is None else np.asarray(self.x_ref, dtype=float)
        self.u_ref = np.zeros((T, m)) if self.u_ref is None else np.asarray(self.u_ref, dtype=float)

    @property
    def horizon(self) -> int:
        return self.u_init.shape[0]

    def linearize(self, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.jacobians is not None:
            return self.jacobians(x, u)
        h = self.fd_step
        n, m = x.size, u.size
        A = np.empty((n, n))
        B = np.empty((n, m))
        for i in range(n):
            d = np.zeros(n)
            d[i] = h
            A[:, i] = self.state_diff(self.dynamics(x + d, u), self.dynamics(x - d, u)) / (2 * h)
        for j in range(m):
            d = np.zeros(m)
            d[j] = h
            B[:, j] = self.state_diff(self.dynamics(x, u + d), self.dynamics(x, u - d)) / (2 * h)
        return A, B

    def cost(self, xs: np.ndarray, us: np.ndarray) -> float:
        c = 0.0
        for t in range(self.horizon):
            dx = self.state_diff(xs[t], self.x_ref[t])
            du = us[t] - self.u_ref[t]
            c += 0.5 * (dx @ self.Q @ dx + du @ self.R @ du)
        dx = self.state_diff(xs[-1], self.x_ref[-1])
        return c + 0.5 * dx @ self.Qf @ dx


@dataclass
class ILQRSolution:
    xs: np.ndarray
    us: np.ndarray
    K: np.ndarray
    k: np.ndarray
    costs: list[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    def control(self, t: int, x: np.ndarray, state_diff: StateDiff = _plain_diff) -> np.ndarray:
        """Affine feedback law around the nominal trajectory."""
        return self.us[t] + self.K[t] @ state_diff(x, self.xs[t]) + self.k[t]


def _rollout(p: ILQRProblem, us: np.ndarray) -> np.ndarray:
    xs = [p.x0]
    for u in us:
        xs.append(np.asarray(p.dynamics(xs[-1], u), dtype=float))
    return np.array(xs)


def _backward(p: ILQRProblem, xs, us, As, Bs, mu):
    T, m = us.shape
    n = xs.shape[1]
    K = np.zeros((T, m, n))
    k = np.zeros((T, m))
    dx = p.state_diff(xs[-1], p.x_ref[-1])
    Vx = p.Qf @ dx
    Vxx = p.Qf.copy()
    for t in range(T - 1, -1, -1):
        A, B = As[t], Bs[t]
        dx = p.state_diff(xs[t], p.x_ref[t])
        Qx = p.Q @ dx + A.T @ Vx
        Qu = p.R @ (us[t] - p.u_ref[t]) + B.T @ Vx
        Qxx = p.Q + A.T @ Vxx @ A
        Quu = p.R + B.T @ Vxx @ B + mu * np.eye(m)
        Qux = B.T @ Vxx @ A
        try:
            L = np.linalg.cholesky(Quu)
        except np.linalg.LinAlgError:
            return None
        solve = lambda M: np.linalg.solve(L.T, np.linalg.solve(L, M))
        k[t] = -solve(Qu)
        K[t] = -solve(Qux)
        Vx = Qx + K[t].T @ Quu @ k[t] + K[t].T @ Qu + Qux.T @ k[t]
        Vxx = Qxx + K[t].T @ Quu @ K[t] + K[t].T @ Qux + Qux.T @ K[t]
        Vxx = 0.5 * (Vxx + Vxx.T)
    return K, k


def ilqr_solve(
    problem: ILQRProblem,
    max_iterations: int = 200,
    tol: float = 1e-8,
    mu_init: float = 0.0,
    mu_max: float = 1e10,
) -> ILQRSolution:
    """Backward Riccati passes with Levenberg regularization and a line search.

    The returned nominal (xs, us) and gains (K, k) define the feedback policy
    ``u = us[t] + K[t] (x - xs[t]) + k[t]``.
    """
    p = problem
    us = p.u_init.copy()
    xs = _rollout(p, us)
    J = p.cost(xs, us)
    costs = [J]
    mu, mu_min = mu_init, 1e-6
    T, m = us.shape
    n = xs.shape[1]
    K, k = np.zeros((T, m, n)), np.zeros((T, m))
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        lin = [p.linearize(xs[t], us[t]) for t in range(T)]
        As = [a for a, _ in lin]
        Bs = [b for _, b in lin]
        while True:
            gains = _backward(p, xs, us, As, Bs, mu)
            if gains is not None:
                break
            mu = max(mu_min, mu * 10.0)
            if mu > mu_max:
                raise ILQRFailed("control Hessian not positive definite at maximum regularization", {"iteration": it, "mu": mu, "cost": J})
        K, k = gains
        accepted = False
        for alpha in LINE_SEARCH:
            xn = [p.x0]
            un = []
            for t in range(T):
                u = us[t] + alpha * k[t] + K[t] @ p.state_diff(xn[-1], xs[t])
                un.append(u)
                xn.append(np.asarray(p.dynamics(xn[-1], u), dtype=float))
            xn, un = np.array(xn), np.array(un)
            Jn = p.cost(xn, un)
            if Jn < J:
                accepted = True
                break
        if not accepted:
            mu = max(mu_min, mu * 10.0)
            if mu > mu_max:
                converged = True
                break
            continue
        improvement = J - Jn
        xs, us, J = xn, un, Jn
        costs.append(J)
        mu = 0.0 if mu <= mu_min else mu / 10.0
        if improvement < tol:
            converged = True
            break
    # Gains at the final nominal, so the feedback law is exact around it.
    lin = [p.linearize(xs[t], us[t]) for t in range(T)]
    gains = _backward(p, xs, us, [a for a, _ in lin], [b for _, b in lin], mu)
    if gains is not None:
        K, k = gains
    return ILQRSolution(xs, us, K, k, costs, converged, it)
