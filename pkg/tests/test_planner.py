import math

import numpy as np
import pytest

from leaper.envs import load_layout
from leaper.envs.layout import Goal
from leaper.geometry import SE2Pose, Twist2
from leaper.physics import ModelKind, PhysicsParams, StepRejected, WorldState, max_penetration
from leaper.planner import (
    PlannedTrajectory,
    Planner,
    PlannerConfig,
    PlanningFailed,
    densify,
    plan,
    propagate,
    replay,
)

REDUCED = load_layout("reduced")


@pytest.fixture(scope="module")
def qs_plan():
    return plan(REDUCED, PlannerConfig(), np.random.default_rng(0), seed=0)


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(goal_bias=1.5)
    with pytest.raises(ValueError):
        PlannerConfig(control_duration_range=(2.0, 1.0))
    w = PlannerConfig().weights(3, 1)
    np.testing.assert_array_equal(w, [0.5, 0.25, 1.0, 0.25])


def test_sampled_controls_respect_limits():
    p = Planner(REDUCED, PlannerConfig())
    rng = np.random.default_rng(1)
    for _ in range(200):
        u, d = p.sample_control(rng)
        assert abs(u.vx) <= 0.25 and abs(u.vy) <= 0.25 and abs(u.omega) <= 2.5
        assert 0.5 - 1e-9 <= d <= 2.0 + 1e-9
        assert abs(d / 0.1 - round(d / 0.1)) < 1e-9


def test_goal_bias_frequency():
    p = Planner(REDUCED, PlannerConfig(goal_bias=0.3))
    rng = np.random.default_rng(2)
    hits = sum(p.sample_state(rng)[1] for _ in range(4000))
    assert hits / 4000 == pytest.approx(0.3, abs=0.03)


def test_goal_sample_places_target_at_goal():
    p = Planner(REDUCED, PlannerConfig(goal_bias=1.0))
    q, is_goal = p.sample_state(np.random.default_rng(0))
    assert is_goal
    np.testing.assert_array_equal(q[1, :2], REDUCED.goal.center)


def test_propagate_free_motion_steps():
    s = REDUCED.start
    p = PhysicsParams.nominal(1, 0.04)
    out = propagate(s, Twist2(-0.1, 0.0, 0.0), 0.5, ModelKind.QUASISTATIC, p, REDUCED.scene)
    assert len(out) == 5
    assert out[-1].robot_pose.x == pytest.approx(s.robot_pose.x - 0.05)
    with pytest.raises(ValueError):
        propagate(s, Twist2(0, 0, 0), 0.0, ModelKind.QUASISTATIC, p, REDUCED.scene)
    with pytest.raises(StepRejected):
        propagate(s, Twist2(0.0, -0.25, 0.0), 2.0, ModelKind.QUASISTATIC, p, REDUCED.scene)


def test_plan_reaches_goal_and_replays(qs_plan):
    t = qs_plan.states[-1].object_poses[REDUCED.scene.target_index]
    assert REDUCED.goal.contains(t.x, t.y)
    assert qs_plan.states[0].poses == REDUCED.start.poses
    for s in qs_plan.states:
        assert max_penetration(s, REDUCED.scene) <= 1e-4
    for got, want in zip(replay(qs_plan, REDUCED), qs_plan.states[1:]):
        for a, b in zip(got.poses, want.poses):
            assert max(abs(a.x - b.x), abs(a.y - b.y), abs(a.theta - b.theta)) <= 1e-6


def test_plan_is_deterministic(qs_plan):
    again = plan(REDUCED, PlannerConfig(), np.random.default_rng(0), seed=0)
    assert again == qs_plan


def test_densify_preserves_endpoints(qs_plan):
    d = densify(qs_plan, REDUCED)
    assert all(dt == pytest.approx(0.1) for dt in d.durations)
    assert d.total_duration == pytest.approx(qs_plan.total_duration)
    assert d.states[-1].poses == qs_plan.states[-1].poses
    assert len(d.controls) == round(qs_plan.total_duration / 0.1)


def test_trajectory_roundtrip(tmp_path, qs_plan):
    path = tmp_path / "t.json"
    qs_plan.save(path)
    assert PlannedTrajectory.load(path) == qs_plan
    text = path.read_text()
    assert '"seconds"' not in text
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 99}')
    with pytest.raises(ValueError):
        PlannedTrajectory.load(bad)


def test_trajectory_shape_validation():
    s = REDUCED.start
    with pytest.raises(ValueError):
        PlannedTrajectory((s,), (Twist2(0, 0, 0),), (0.1,), ModelKind.WELD)


def test_start_in_goal_gives_empty_plan():
    t = REDUCED.start.object_poses[0]
    p = Planner(REDUCED, PlannerConfig(), goal=Goal((t.x, t.y), 0.05)).plan(REDUCED.start, np.random.default_rng(0))
    assert len(p) == 1 and p.controls == ()


def test_planning_failure_reports_stats():
    cfg = PlannerConfig(max_iterations=3)
    with pytest.raises(PlanningFailed) as e:
        plan(REDUCED, cfg, np.random.default_rng(0))
    assert e.value.stats["iterations"] == 3
    assert e.value.stats["closest_target_distance"] > 0.0


def test_colliding_start_rejected():
    t = REDUCED.start.object_poses[0]
    bad = WorldState(SE2Pose(t.x, t.y), REDUCED.start.object_poses)
    with pytest.raises(ValueError):
        plan(REDUCED, PlannerConfig(), np.random.default_rng(0), start=bad)


@pytest.mark.parametrize("model", [ModelKind.WELD, ModelKind.QUASISTATIC])
def test_weld_and_qs_plans_replay(model):
    tr = plan(REDUCED, PlannerConfig(model=model), np.random.default_rng(3), seed=3)
    assert tr.model is model
    final = replay(tr, REDUCED)[-1] if tr.controls else tr.states[-1]
    t = final.object_poses[0]
    assert math.hypot(t.x - REDUCED.goal.center[0], t.y - REDUCED.goal.center[1]) < 0.05
