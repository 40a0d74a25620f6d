"""Controllers that execute a planned trajectory in the full-dynamics environment."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from leaper.baselines.ilqr import ILQRProblem, ILQRSolution, ilqr_solve
from leaper.envs.rearrange import RearrangeEnvConfig, RearrangementEnv, clamp_action
from leaper.geometry import SE2Pose, Twist2, angle_diff
from leaper.physics import ModelKind, WorldState, step_dynamic
from leaper.planner import PlannedTrajectory

CONTROLLER_KINDS = ("open_loop", "velocity_feedback", "ilqr")
# A wide stencil averages over contact switches; at 1e-5 the linearization sees
# single contact events and the resulting gains amplify model error.
TRACKING_FD_STEP = 1e-3
TRACKING_ITERATIONS = 10


@dataclass(frozen=True)
class TrackingCostWeights:
    target_position: float = 10.0
    robot_pose: float = 1.0
    control: float = 0.1
    terminal_scale: float = 100.0


def state_vector(s: WorldState) -> np.ndarray:
    """Poses of robot and objects followed by the object twists."""
    poses = np.array(s.poses, dtype=float).ravel()
    twists = np.array(s.object_twists, dtype=float).ravel()
    return np.concatenate([poses, twists])


def vector_state(x: np.ndarray, n_objects: int) -> WorldState:
    n_pose = 3 * (1 + n_objects)
    p = x[:n_pose].reshape(-1, 3)
    tw = x[n_pose:].reshape(-1, 3)
    return WorldState(
        SE2Pose(*p[0]),
        tuple(SE2Pose(*q) for q in p[1:]),
        object_twists=tuple(Twist2(*t) for t in tw),
    )


def _angle_mask(n_objects: int) -> np.ndarray:
    n_pose = 3 * (1 + n_objects)
    mask = np.zeros(n_pose + 3 * n_objects, dtype=bool)
    mask[2:n_pose:3] = True
    return mask


def make_state_diff(n_objects: int):
    mask = _angle_mask(n_objects)

    def diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        d[mask] = np.remainder(d[mask] + math.pi, 2.0 * math.pi) - math.pi
        return d

    return diff


def reference_steps(traj: PlannedTrajectory, dt: float) -> bool:
    return all(abs(d - dt) < 1e-9 for d in traj.durations)


def rollout_controller(
    traj: PlannedTrajectory,
    env_config: RearrangeEnvConfig,
    rng: np.random.Generator,
    n: int,
    policy,
) -> float:
    """Success fraction of ``policy(t, state) -> Twist2`` over ``n`` randomized episodes.

    Episodes last the longer of the environment horizon and the reference;
    once the reference runs out the robot holds still.
    """
    if not reference_steps(traj, env_config.dt):
        raise ValueError("reference must be densified to the control step")
    horizon = max(env_config.episode_len, len(traj.controls))
    env = RearrangementEnv(env_config, rng)
    wins = 0
    for _ in range(n):
        state, _ = env.reset(traj.states[0])
        ok = env.reward() == 0.0
        for t in range(horizon):
            u = policy(t, state) if t < len(traj.controls) else Twist2(0.0, 0.0, 0.0)
            state, _, r, _ = env.step(clamp_action(u, env_config.action_limits))
            ok = ok or r == 0.0
        wins += ok
    return wins / n


def openloop_rollout(traj: PlannedTrajectory, env_config: RearrangeEnvConfig, rng: np.random.Generator, n: int) -> float:
    return rollout_controller(traj, env_config, rng, n, lambda t, s: traj.controls[t])


def velocity_feedback_rollout(
    traj: PlannedTrajectory, env_config: RearrangeEnvConfig, rng: np.random.Generator, n: int, gain: float = 1.0
) -> float:
    """Open-loop controls plus a proportional pull toward the reference robot pose."""

    def policy(t, s: WorldState) -> Twist2:
        ref = traj.states[t]
        r, q = s.robot_pose, ref.robot_pose
        u = traj.controls[t]
        return Twist2(
            u.vx + gain * (q.x - r.x),
            u.vy + gain * (q.y - r.y),
            u.omega + gain * angle_diff(q.theta, r.theta),
        )

    return rollout_controller(traj, env_config, rng, n, policy)


def tracking_problem(
    traj: PlannedTrajectory,
    env_config: RearrangeEnvConfig,
    weights: TrackingCostWeights = TrackingCostWeights(),
    fd_step: float = TRACKING_FD_STEP,
) -> ILQRProblem:
    """Quadratic tracking problem around the reference under nominal full dynamics."""
    layout = env_config.layout
    n_obj = layout.n_objects
    scene = layout.scene
    params = env_config.nominal
    dt = env_config.dt
    limits = np.asarray(env_config.action_limits)

    def dynamics(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        uc = np.clip(u, -limits, limits)
        s = step_dynamic(vector_state(x, n_obj), Twist2(*uc), dt, params, scene)
        return state_vector(s)

    dim = 6 * n_obj + 3
    q = np.zeros(dim)
    q[0:3] = weights.robot_pose
    t0 = 3 * (1 + scene.target_index)
    q[t0 : t0 + 2] = weights.target_position
    Q = np.diag(q)
    R = weights.control * np.eye(3)
    x_ref = np.array([state_vector(s.at_rest()) for s in traj.states])
    u_ref = np.array(traj.controls, dtype=float)
    return ILQRProblem(
        dynamics=dynamics,
        x0=x_ref[0],
        u_init=u_ref.copy(),
        Q=Q,
        R=R,
        Qf=weights.terminal_scale * Q,
        x_ref=x_ref,
        u_ref=u_ref,
        state_diff=make_state_diff(n_obj),
        fd_step=fd_step,
    )


def ilqr_controller(
    traj: PlannedTrajectory,
    env_config: RearrangeEnvConfig,
    max_iterations: int = TRACKING_ITERATIONS,
    weights: TrackingCostWeights = TrackingCostWeights(),
    fd_step: float = TRACKING_FD_STEP,
) -> tuple[ILQRSolution, ILQRProblem]:
    problem = tracking_problem(traj, env_config, weights, fd_step)
    return ilqr_solve(problem, max_iterations=max_iterations, tol=1e-8), problem


def ilqr_track(
    traj: PlannedTrajectory,
    env_config: RearrangeEnvConfig,
    rng: np.random.Generator,
    n: int,
    solution: ILQRSolution | None = None,
    max_iterations: int = TRACKING_ITERATIONS,
) -> float:
    """Execute ``u = us + K (x - xs) + k`` clamped to the limits."""
    if solution is None:
        solution, problem = ilqr_controller(traj, env_config, max_iterations)
        diff = problem.state_diff
    else:
        diff = make_state_diff(env_config.layout.n_objects)

    def policy(t, s: WorldState) -> Twist2:
        return Twist2(*solution.control(t, state_vector(s), diff))

    return rollout_controller(traj, env_config, rng, n, policy)
