import math

import numpy as np
import pytest

from leaper.envs import RearrangeEnvConfig, load_layout, parse_layout
from leaper.geometry import SE2Pose
from leaper.physics import WorldState, max_penetration
from leaper.planner import PlannerConfig, densify, plan
from leaper.rl import DDPGConfig
from leaper.trainer import (
    LearningCurve,
    ResetDistribution,
    TrainConfig,
    _lift,
    episodes_to_threshold,
    evaluate,
    first_crossing,
    sample_initial_state,
    train,
    uniform_rearrangement_state,
)

CLEAR_PATH = parse_layout(
    {
        "schema_version": 1,
        "name": "clear",
        "robot": {"box": [0.08, 0.04], "pose": [0.5, 0.1, 0.0]},
        "objects": [{"box": [0.04, 0.04], "pose": [0.5, 0.25, 0.0]}],
        "goal": {"center": [0.5, 0.6], "radius": 0.05},
        "episode_len": 30,
    }
)
REDUCED = load_layout("reduced")
TINY_DDPG = DDPGConfig(hidden=(16, 16), batch_size=32, updates_per_cycle=5, lr_actor=1e-3, lr_critic=1e-3)


def test_reset_distribution_validation_and_weights():
    with pytest.raises(ValueError):
        ResetDistribution(alpha=0.7, uniform=0.5)
    with pytest.raises(ValueError):
        ResetDistribution(alpha=-0.1)
    d = ResetDistribution(alpha=0.5, uniform=0.2)
    assert d.start == pytest.approx(0.3)
    assert sum(d.weights.values()) == pytest.approx(1.0)


def test_start_only_draw_consumes_no_randomness():
    rng = np.random.default_rng(0)
    before = rng.bit_generator.state
    assert ResetDistribution().draw_kind(rng) == "start"
    assert rng.bit_generator.state == before


def test_mixture_frequencies():
    d = ResetDistribution(alpha=0.5, uniform=0.25)
    rng = np.random.default_rng(1)
    kinds = [d.draw_kind(rng) for _ in range(8000)]
    assert kinds.count("planned") / 8000 == pytest.approx(0.5, abs=0.02)
    assert kinds.count("uniform") / 8000 == pytest.approx(0.25, abs=0.02)
    assert kinds.count("start") / 8000 == pytest.approx(0.25, abs=0.02)


def test_alpha_one_always_resets_on_the_plan():
    states = ["a", "b", "c"]
    rng = np.random.default_rng(2)
    draws = {sample_initial_state(ResetDistribution(alpha=1.0), states, rng, "start") for _ in range(200)}
    assert draws == set(states)
    assert sample_initial_state(ResetDistribution(), None, rng, "start") == "start"
    with pytest.raises(ValueError):
        sample_initial_state(ResetDistribution(alpha=0.5), None, rng, "start")
    with pytest.raises(ValueError):
        sample_initial_state(ResetDistribution(uniform=1.0), None, rng, "start")
    with pytest.raises(ValueError):
        sample_initial_state(ResetDistribution(oracle=1.0), None, rng, "start", oracle_states=[])


def test_uniform_states_are_collision_free():
    cfg = RearrangeEnvConfig.for_layout("layout2")
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = uniform_rearrangement_state(cfg, rng)
        assert max_penetration(s, cfg.layout.scene) <= 1e-6


def test_lift_zeroes_twists_and_resolves_overlap():
    cfg = RearrangeEnvConfig.for_layout("reduced")
    t = REDUCED.start.object_poses[0]
    rng = np.random.default_rng(0)
    # Touching within a fraction of a millimetre: nudged apart.
    r = REDUCED.scene.robot_shape
    s = WorldState(SE2Pose(t.x, t.y - 0.04 - r.half_h + 2e-4), REDUCED.start.object_poses)
    lifted = _lift(s, cfg, rng)
    assert max_penetration(lifted, REDUCED.scene) <= 1e-6
    assert abs(lifted.robot_pose.y - s.robot_pose.y) <= 1e-3 + 1e-12
    # Deep overlap falls back to the layout start.
    deep = WorldState(SE2Pose(t.x, t.y), REDUCED.start.object_poses)
    assert _lift(deep, cfg, rng) == REDUCED.start


def test_learning_curve_validation():
    c = LearningCurve(seed=1, config_id="x")
    c.append(10, 0.5)
    with pytest.raises(ValueError):
        c.append(10, 0.6)
    with pytest.raises(ValueError):
        c.append(20, 1.5)
    assert c.rows() == [(10, 0.5, 1, "x")]


def curve(points):
    c = LearningCurve()
    for e, s in points:
        c.append(e, s)
    return c


def test_first_crossing_and_percentiles():
    assert first_crossing(curve([(50, 0.2), (100, 0.8), (150, 0.9)])) == 100
    assert math.isinf(first_crossing(curve([(50, 0.2)])))
    cs = [curve([(e, 0.9)]) for e in (100, 200, 300, 400, 500)]
    med, p20, p80 = episodes_to_threshold(cs)
    assert (med, p20, p80) == (300, 180, 420)
    cs = [curve([(100, 0.9)]), curve([(200, 0.9)])] + [curve([(50, 0.1)])] * 3
    med, p20, p80 = episodes_to_threshold(cs)
    assert math.isinf(med) and math.isinf(p80) and p20 == 180
    with pytest.raises(ValueError):
        episodes_to_threshold([])


def test_evaluate_scripted_straight_push_succeeds():
    cfg = RearrangeEnvConfig.for_layout(CLEAR_PATH)
    rate = evaluate(lambda o, g: np.array([0.0, 1.0, 0.0]), cfg, 20, np.random.default_rng(0))
    assert rate == 1.0


def test_evaluate_zero_policy_fails():
    cfg = RearrangeEnvConfig.for_layout("reduced")
    assert evaluate(lambda o, g: np.zeros(3), cfg, 5, np.random.default_rng(0)) == 0.0
    with pytest.raises(ValueError):
        evaluate(lambda o, g: np.zeros(3), cfg, 0, np.random.default_rng(0))


@pytest.fixture(scope="module")
def reduced_plan():
    return densify(plan(REDUCED, PlannerConfig(), np.random.default_rng(0), seed=0), REDUCED)


def test_train_is_deterministic(reduced_plan):
    cfg = TrainConfig(
        env=RearrangeEnvConfig.for_layout("reduced"),
        ddpg=TINY_DDPG,
        resets=ResetDistribution(alpha=0.5),
        episodes=6,
        eval_interval=3,
        eval_episodes=2,
        seed=4,
    )
    a1, c1 = train(cfg, reduced_plan)
    a2, c2 = train(cfg, reduced_plan)
    assert c1.episodes == [3, 6]
    assert c1.success == c2.success
    o = np.zeros(8)
    np.testing.assert_array_equal(a1.policy(o, np.zeros(2)), a2.policy(o, np.zeros(2)))
    with pytest.raises(ValueError):
        train(cfg, None)


def test_mixing_grid_panels():
    from leaper.trainer import MIXING_GRID

    assert MIXING_GRID["S"].start == 1.0
    assert MIXING_GRID["U+S"].oracle == 0.0 and MIXING_GRID["O+S"].uniform == 0.0
    assert MIXING_GRID["O+U"].start == pytest.approx(0.5)


def test_final_kl_averages_the_tail_then_takes_the_median():
    from leaper.experiments import final_kl

    series = {
        0: [(250, 9.0), (500, 9.0), (750, 4.0), (1000, 2.0)],
        1: [(250, 9.0), (500, 9.0), (750, 6.0), (1000, 7.0)],
        2: [(250, 1.0), (500, 1.0), (750, 8.0), (1000, 9.0)],
    }
    # Tails from episode 750 on: means 3.0, 6.5, 8.5.
    assert final_kl(series, tail=0.25) == pytest.approx(6.5)
    # The last checkpoint alone: 2.0, 7.0, 9.0.
    assert final_kl(series, tail=0.0) == pytest.approx(7.0)
    # The whole curve: 6.0, 7.75, 4.75.
    assert final_kl(series, tail=1.0) == pytest.approx(6.0)
