import math

import numpy as np
import pytest
import scipy.linalg

from leaper.baselines import (
    ILQRFailed,
    ILQRProblem,
    cartpole_ilqr,
    cartpole_oracle_distribution,
    ilqr_solve,
    kl_divergence,
    openloop_rollout,
    state_histogram,
)
from leaper.baselines.cartpole import ilqr_policy_rollout, wrap_state
from leaper.baselines.tracking import make_state_diff, state_vector, vector_state, velocity_feedback_rollout
from leaper.envs import RearrangeEnvConfig, load_layout
from leaper.envs.cartpole import CartPoleParams
from leaper.geometry import SE2Pose, Twist2
from leaper.physics import ModelKind, WorldState
from leaper.planner import PlannedTrajectory, PlannerConfig, densify, plan


def lti_problem(T=30, seed=0):
    rng = np.random.default_rng(seed)
    A = np.eye(3) + 0.1 * rng.standard_normal((3, 3))
    B = rng.standard_normal((3, 2))
    Q = np.diag([1.0, 2.0, 0.5])
    R = 0.3 * np.eye(2)
    Qf = 5.0 * np.eye(3)
    x0 = rng.standard_normal(3)
    p = ILQRProblem(
        dynamics=lambda x, u: A @ x + B @ u,
        x0=x0,
        u_init=np.zeros((T, 2)),
        Q=Q,
        R=R,
        Qf=Qf,
    )
    return p, A, B, Q, R, Qf


def riccati_gains(A, B, Q, R, Qf, T):
    P = Qf
    Ks = []
    for _ in range(T):
        K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ (A + B @ K)
        Ks.append(K)
    return Ks[::-1]


@pytest.mark.parametrize("seed", range(3))
def test_ilqr_matches_riccati_on_lti(seed):
    T = 30
    p, A, B, Q, R, Qf = lti_problem(T, seed)
    sol = ilqr_solve(p, max_iterations=20, tol=1e-14)
    Ks = riccati_gains(A, B, Q, R, Qf, T)
    for t in range(T):
        assert np.max(np.abs(sol.K[t] - Ks[t])) <= 1e-6
    # The optimal open-loop sequence is the closed-loop LQR rollout.
    x = p.x0
    for t in range(T):
        u = Ks[t] @ x
        assert np.max(np.abs(sol.us[t] - u)) <= 1e-6
        x = A @ x + B @ u
    assert sol.converged
    assert np.max(np.abs(sol.k)) <= 1e-6


def test_ilqr_cost_is_monotone():
    p, *_ = lti_problem(20, 5)
    sol = ilqr_solve(p, max_iterations=10)
    assert all(b <= a for a, b in zip(sol.costs, sol.costs[1:]))


def test_ilqr_infinite_horizon_limit_matches_dare():
    p, A, B, Q, R, _ = lti_problem(200, 1)
    P = scipy.linalg.solve_discrete_are(A, B, Q, R)
    p.Qf = P
    sol = ilqr_solve(p, max_iterations=5, tol=1e-14)
    K_inf = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    assert np.max(np.abs(sol.K[0] - K_inf)) <= 1e-6


def test_ilqr_problem_validation():
    base = dict(dynamics=lambda x, u: x, x0=np.zeros(2), u_init=np.zeros((3, 1)), Q=np.eye(2), Qf=np.eye(2))
    with pytest.raises(ValueError):
        ILQRProblem(R=np.zeros((1, 1)), **base)
    with pytest.raises(ValueError):
        ILQRProblem(R=np.eye(2), **base)
    with pytest.raises(ValueError):
        ILQRProblem(R=np.eye(1), **{**base, "Q": -np.eye(2)})


def test_cartpole_ilqr_reaches_goal():
    params = CartPoleParams()
    sol = cartpole_ilqr(params)
    assert sol.xs[-1][0] == pytest.approx(params.x_goal, abs=0.1)
    assert abs(sol.xs[-1][2]) < 0.2
    traj = ilqr_policy_rollout(sol, np.array([0.02, -0.01, 0.03, 0.0]), params)
    assert traj[-1][0] == pytest.approx(params.x_goal, abs=0.1)


def test_histogram_and_kl():
    rng = np.random.default_rng(0)
    s = rng.uniform(-1, 1, (500, 4))
    h = state_histogram(s)
    assert h.sum() == pytest.approx(1.0)
    assert kl_divergence(h, h) == pytest.approx(0.0, abs=1e-12)
    other = state_histogram(s + np.array([1.0, 0, 0, 0]))
    assert kl_divergence(h, other) > 0.1
    # Out-of-range states land in edge bins instead of vanishing.
    assert state_histogram(np.array([[100.0, 0, 0, 0]])).sum() == pytest.approx(1.0)
    np.testing.assert_allclose(wrap_state(np.array([0, 0, 2.5 * math.pi, 0]))[2], 0.5 * math.pi, atol=1e-12)


def test_kl_two_bin_closed_form():
    p = np.array([0.25, 0.75])
    q = np.array([0.5, 0.5])
    expected = 0.25 * math.log(0.5) + 0.75 * math.log(1.5)
    assert kl_divergence(p, q, smoothing=0.0) == pytest.approx(expected)


def test_oracle_distribution():
    sol = cartpole_ilqr()
    od = cartpole_oracle_distribution(sol, 3, np.random.default_rng(0))
    assert od.states.shape == (3 * 101, 4)
    assert od.histogram.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        cartpole_oracle_distribution(sol, 0, np.random.default_rng(0))


def test_state_vector_roundtrip_and_angle_diff():
    s = WorldState(SE2Pose(0.1, 0.2, 0.3), (SE2Pose(0.4, 0.5, -3.0),), object_twists=(Twist2(1, 2, 3),))
    x = state_vector(s)
    assert x.shape == (9,)
    assert vector_state(x, 1) == s
    d = make_state_diff(1)
    a, b = x.copy(), x.copy()
    a[5], b[5] = math.pi - 0.1, -math.pi + 0.1
    assert d(a, b)[5] == pytest.approx(-0.2)


REDUCED = load_layout("reduced")


@pytest.fixture(scope="module")
def reduced_reference():
    return densify(plan(REDUCED, PlannerConfig(), np.random.default_rng(1), seed=1), REDUCED)


def test_openloop_model_matched_replay_succeeds(reduced_reference):
    cfg = RearrangeEnvConfig.for_layout(REDUCED, model=ModelKind.QUASISTATIC, randomize=False)
    assert openloop_rollout(reduced_reference, cfg, np.random.default_rng(0), 2) == 1.0
    assert velocity_feedback_rollout(reduced_reference, cfg, np.random.default_rng(0), 2) == 1.0


def test_openloop_requires_dense_reference():
    coarse = plan(REDUCED, PlannerConfig(), np.random.default_rng(1), seed=1)
    cfg = RearrangeEnvConfig.for_layout(REDUCED)
    if all(abs(d - 0.1) < 1e-9 for d in coarse.durations):
        pytest.skip("plan already at control resolution")
    with pytest.raises(ValueError):
        openloop_rollout(coarse, cfg, np.random.default_rng(0), 1)
