import math

import numpy as np
import pytest
import scipy.linalg
import yaml
from hypothesis import given
from hypothesis import strategies as st

from leaper.envs import (
    BUILTIN_LAYOUTS,
    CartPoleEnv,
    CartPoleParams,
    LayoutError,
    RearrangeEnvConfig,
    RearrangementEnv,
    achieved_goal,
    cartpole_energy,
    cartpole_reward,
    cartpole_step,
    clamp_action,
    decode_observation,
    goal_reward,
    load_layout,
    normalize_action,
    observe,
    parse_layout,
    scale_action,
)
from leaper.geometry import SE2Pose, Twist2
from leaper.physics import ModelKind, WorldState, max_penetration

MINIMAL = {
    "schema_version": 1,
    "name": "tiny",
    "robot": {"box": [0.04, 0.02], "pose": [0.5, 0.1, 0.0]},
    "objects": [{"name": "t", "box": [0.04, 0.04], "pose": [0.5, 0.3, 0.0]}],
    "goal": {"center": [0.5, 0.7], "radius": 0.05},
}


@pytest.mark.parametrize("name", BUILTIN_LAYOUTS)
def test_builtin_layouts_load_collision_free(name):
    lay = load_layout(name)
    assert max_penetration(lay.start, lay.scene) <= 1e-6
    assert not lay.goal.contains(*achieved_goal(lay.start, lay.scene.target_index))


def test_layout_numeric_aliases():
    assert load_layout(1).name == load_layout("layout1").name
    assert load_layout("reduced").n_objects == 1
    assert load_layout("reduced").episode_len == 30


def test_layout_from_file(tmp_path):
    p = tmp_path / "l.yaml"
    p.write_text(yaml.safe_dump(MINIMAL))
    lay = load_layout(p)
    assert lay.name == "tiny" and lay.episode_len == 50


@pytest.mark.parametrize(
    "patch, msg",
    [
        ({"schema_version": 2}, "schema_version"),
        ({"objects": []}, "at least one"),
        ({"target": 3}, "out of range"),
        ({"goal": {"center": [2.0, 0.5]}}, "off the table"),
        ({"robot": {"box": [0.04, 0.02], "pose": [0.5, 0.3, 0.0]}}, "collision"),
        ({"robot": {"pose": [0.5, 0.1, 0.0]}}, "box"),
    ],
)
def test_layout_validation_errors(patch, msg):
    with pytest.raises(LayoutError, match=msg):
        parse_layout({**MINIMAL, **patch})


def test_missing_layout_file():
    with pytest.raises(LayoutError):
        load_layout("/nonexistent/layout.yaml")


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_action_scaling_roundtrip(a):
    u = scale_action(np.clip(a, -1, 1))
    assert all(abs(v) <= lim + 1e-12 for v, lim in zip(u, (0.25, 0.25, 2.5)))
    np.testing.assert_allclose(normalize_action(u), np.clip(a, -1, 1), atol=1e-12)
    assert clamp_action([1, -1, 9]) == Twist2(0.25, -0.25, 2.5)


def test_observation_encoding():
    s = WorldState(SE2Pose(0.1, 0.2, 0.5), (SE2Pose(0.3, 0.4, -1.0),))
    o = observe(s)
    assert o.shape == (8,)
    np.testing.assert_allclose(o[:4], [0.1, 0.2, math.sin(0.5), math.cos(0.5)])
    dec = decode_observation(o)
    assert dec[1] == pytest.approx((0.3, 0.4, -1.0))
    with pytest.raises(ValueError):
        observe(s, (0.01, 0.1))


def test_observation_noise_bounds():
    s = WorldState(SE2Pose(0.1, 0.2, 0.5), (SE2Pose(0.3, 0.4, -1.0),))
    rng = np.random.default_rng(0)
    for _ in range(50):
        dec = decode_observation(observe(s, (0.01, 0.1), rng))
        assert abs(dec[0][0] - 0.1) <= 0.01 and abs(dec[0][1] - 0.2) <= 0.01
        assert abs(dec[0][2] - 0.5) <= 0.1 + 1e-12


def test_goal_reward_boundary():
    g = np.array([0.5, 0.5])
    assert goal_reward(np.array([0.5, 0.549]), g, 0.05) == 0.0
    assert goal_reward(np.array([0.5, 0.55]), g, 0.05) == -1.0
    batch = goal_reward(np.array([[0.5, 0.5], [0.9, 0.9]]), g, 0.05)
    np.testing.assert_array_equal(batch, [0.0, -1.0])


def test_env_fixed_horizon_and_rewards():
    cfg = RearrangeEnvConfig.for_layout("reduced")
    env = RearrangementEnv(cfg, np.random.default_rng(0))
    state, obs = env.reset()
    assert obs.shape == (cfg.obs_dim,)
    done, n = False, 0
    while not done:
        state, obs, r, done = env.step(Twist2(0.0, 0.0, 0.0))
        assert r == -1.0
        n += 1
    assert n == cfg.episode_len


def test_env_rejects_colliding_start():
    cfg = RearrangeEnvConfig.for_layout("reduced")
    env = RearrangementEnv(cfg, np.random.default_rng(0))
    t = cfg.layout.start.object_poses[0]
    with pytest.raises(ValueError):
        env.reset(WorldState(SE2Pose(t.x, t.y), cfg.layout.start.object_poses))


def test_env_resamples_physics_deterministically():
    cfg = RearrangeEnvConfig.for_layout("reduced")
    a = RearrangementEnv(cfg, np.random.default_rng(3))
    b = RearrangementEnv(cfg, np.random.default_rng(3))
    a.reset(), b.reset()
    assert a.params == b.params and a.params != cfg.nominal
    c = RearrangementEnv(RearrangeEnvConfig.for_layout("reduced", randomize=False), np.random.default_rng(3))
    c.reset()
    assert c.params == cfg.nominal


def test_env_quasistatic_rejection_holds_state():
    cfg = RearrangeEnvConfig.for_layout("reduced", model=ModelKind.QUASISTATIC, obs_noise=(0.0, 0.0))
    env = RearrangementEnv(cfg, np.random.default_rng(0))
    start = WorldState(SE2Pose(0.5, 0.041), cfg.layout.start.object_poses)
    env.reset(start)
    s, _, _, _ = env.step(Twist2(0.0, -0.25, 0.0))
    assert s.robot_pose == start.robot_pose


def test_scripted_push_reaches_goal():
    # Nominal physics, no noise: slide over, then push straight along +y.
    cfg = RearrangeEnvConfig.for_layout("reduced", randomize=False, obs_noise=(0.0, 0.0), episode_len=60)
    env = RearrangementEnv(cfg, np.random.default_rng(0))
    state, _ = env.reset()
    t = state.object_poses[0]
    r = state.robot_pose
    hit = False
    while abs(state.robot_pose.x - t.x) > 1e-6:
        dx = t.x - state.robot_pose.x
        state, _, _, _ = env.step(Twist2(max(-0.25, min(0.25, dx / 0.1)), 0.0, 0.0))
    for _ in range(40):
        state, _, rew, _ = env.step(Twist2(0.0, 0.2, 0.0))
        hit = hit or rew == 0.0
    assert r.y < t.y and hit


# CartPole


def test_cartpole_energy_conservation():
    p = CartPoleParams()
    s = np.array([0.0, 0.0, 1.0, 0.0])
    e0 = cartpole_energy(s, p)
    for _ in range(100):
        s = cartpole_step(s, 0.0, p=p)
    assert abs(cartpole_energy(s, p) - e0) < 1e-6


def test_cartpole_small_angle_matches_linearization():
    p = CartPoleParams()
    M = p.cart_mass + p.pole_mass
    a = p.gravity / (p.half_length * (4 / 3 - p.pole_mass / M))
    A = np.zeros((4, 4))
    A[0, 1] = A[2, 3] = 1.0
    A[3, 2] = a
    A[1, 2] = -p.pole_mass * p.half_length * a / M
    s0 = np.array([0.0, 0.0, 1e-4, 0.0])
    s = s0
    for _ in range(10):
        s = cartpole_step(s, 0.0, p=p)
    lin = scipy.linalg.expm(A * 10 * p.dt) @ s0
    np.testing.assert_allclose(s, lin, rtol=1e-2, atol=1e-12)


def test_cartpole_upright_equilibrium():
    s = cartpole_step(np.zeros(4), 0.0)
    np.testing.assert_array_equal(s, np.zeros(4))


def test_cartpole_force_accelerates_cart():
    p = CartPoleParams()
    s = cartpole_step(np.zeros(4), 10.0, p=p)
    # Initial cart acceleration with the pole upright and at rest.
    ml, total = p.pole_mass * p.half_length, p.cart_mass + p.pole_mass
    thdd = -(10.0 / total) / (p.half_length * (4 / 3 - p.pole_mass / total))
    xdd = 10.0 / total - ml * thdd / total
    assert s[1] == pytest.approx(xdd * p.dt, rel=1e-2)
    # Force beyond the limit is clamped.
    np.testing.assert_array_equal(cartpole_step(np.zeros(4), 100.0), s)


def test_cartpole_reward_and_env():
    p = CartPoleParams()
    assert cartpole_reward(np.array([1.05, 0, 0.1, 0]), p) == 0.0
    assert cartpole_reward(np.array([1.2, 0, 0.0, 0]), p) == -1.0
    assert cartpole_reward(np.array([1.0, 0, 0.3, 0]), p) == -1.0
    env = CartPoleEnv(p, np.random.default_rng(0))
    s = env.reset()
    assert np.all(np.abs(s) <= 0.05)
    n, done = 0, False
    while not done:
        s, r, done = env.step(10.0)
        n += 1
        assert abs(s[0]) <= p.x_limit
    assert n == p.episode_len


def test_cartpole_fall_is_absorbing():
    p = CartPoleParams()
    env = CartPoleEnv(p, np.random.default_rng(0))
    env.reset(np.array([0.0, 0.0, p.fall_angle + 0.01, 0.0]))
    assert env.fallen()
    frozen = env.s.copy()
    for _ in range(5):
        s, r, _ = env.step(-10.0)
        np.testing.assert_array_equal(s, frozen)
        assert r == -1.0
    # A pole swung past the fall angle from upright freezes there too.
    env.reset(np.array([0.0, 0.0, 0.1, 0.0]))
    while not env.fallen():
        env.step(-10.0)
    assert p.fall_angle < abs(env.s[2]) < 1.2 * p.fall_angle
