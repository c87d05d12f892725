import numpy as np
import pytest

from tetherplan.cable import bending_angle
from tetherplan.cmms import plan_cmms, project_slider_goal
from tetherplan.geometry import Box, Pose, compose, rot_z, rotation_angle_deg
from tetherplan.grasps import grasp_world_pose
from tetherplan.kinematics import fk_batch
from tetherplan.omms import hand_pose, plan_omms, verify_sequence
from tetherplan.rrt import PlanningError, interpolate, rrt_connect, shortcut
from tetherplan.scene import load_scene, tool_pose

from oracles import sweep_oracle


@pytest.fixture(scope="module")
def scene():
    return load_scene()


@pytest.fixture(scope="module")
def bench1(scene):
    goals = [scene.goals[i] for i in scene.benchmarks[1]]
    return plan_omms(scene, scene.start, goals, seed=0)


# --- interpolation and RRT ----------------------------------------------


def test_interpolate_counts():
    out = interpolate([np.zeros(6), np.full(6, 10.0)], 5.0)
    assert len(out) == 3
    single = interpolate([np.ones(6)], 5.0)
    assert len(single) == 1 and np.array_equal(single[0], np.ones(6))


def test_interpolate_random_paths():
    rng = np.random.default_rng(0)
    for _ in range(50):
        path = list(rng.uniform(-170, 170, (rng.integers(2, 8), 6)))
        out = interpolate(path, 5.0)
        assert np.array_equal(out[0], path[0]) and np.array_equal(out[-1], path[-1])
        assert np.abs(np.diff(np.array(out), axis=0)).max() <= 5.0 + 1e-9


def test_interpolate_empty():
    with pytest.raises(ValueError):
        interpolate([], 5.0)


def wall_free(qs):
    qs = np.atleast_2d(qs)
    # a wall at x in [-10, 10] with a gap for y > 60
    return ~((np.abs(qs[:, 0]) < 10) & (qs[:, 1] < 60))


def test_rrt_connect_around_wall():
    rng = np.random.default_rng(1)
    lo, hi = np.array([-100.0, -100.0]), np.array([100.0, 100.0])
    path = rrt_connect(wall_free, [-50, 0], [50, 0], lo, hi, rng, step=5.0)
    assert path is not None
    dense = interpolate(shortcut(path, wall_free, rng, 100, 5.0), 5.0)
    assert wall_free(np.array(dense)).all()
    assert np.allclose(dense[0], [-50, 0]) and np.allclose(dense[-1], [50, 0])


def test_rrt_blocked_start():
    rng = np.random.default_rng(1)
    assert rrt_connect(wall_free, [0, 0], [50, 0], [-100, -100], [100, 100], rng) is None


# --- OMMS ------------------------------------------------------------------


def test_omms_visits_goals(scene, bench1):
    places = bench1.place_indices()
    goals = [scene.goals[i] for i in scene.benchmarks[1]]
    assert len(places) == 3
    for idx, goal in zip(places, goals):
        T = bench1.states[idx].tool_pose
        assert np.linalg.norm(T.translation - goal.translation) <= 1.0
        assert rotation_angle_deg(T.rotation, goal.rotation) <= 0.5


def test_omms_density_and_collisions(scene, bench1):
    q = np.array([s.q_tool_arm for s in bench1.states])
    assert np.abs(np.diff(q, axis=0)).max() <= 5.0 + 1e-9
    assert verify_sequence(scene, bench1) == []
    assert [s.step for s in bench1.states] == list(range(len(bench1)))


def test_omms_grasp_consistency(scene, bench1):
    arm = scene.arm("tool")
    rel = None
    for s in bench1.states:
        if not s.tool_grasped:
            continue
        T = compose(hand_pose(arm, s.q_tool_arm).inverse(), s.tool_pose)
        if rel is None:
            rel = T
        assert np.abs(T.matrix() - rel.matrix()).max() <= 1e-6
        hand = grasp_world_pose(bench1.tool_grasp, s.tool_pose)
        assert hand.is_close(hand_pose(arm, s.q_tool_arm), 1e-6)


def test_omms_replay_matches_oracle(scene, bench1):
    measured = [bending_angle(s.cable).signed for s in bench1.states]
    oe, _ = sweep_oracle(measured, scene.beta)
    assert np.abs(bench1.acc_ee() - oe).max() <= 1e-6


def test_omms_deterministic(scene, bench1):
    again = plan_omms(scene, scene.start, [scene.goals[i] for i in scene.benchmarks[1]], seed=0)
    assert len(again) == len(bench1)
    for a, b in zip(again.states, bench1.states):
        assert np.array_equal(a.q_tool_arm, b.q_tool_arm)


def test_omms_goal_is_start(scene):
    seq = plan_omms(scene, scene.start, [scene.start], seed=0)
    for s in seq.states:
        if s.tool_grasped:
            # held poses come from IK, so they match within the IK tolerance
            assert np.linalg.norm(s.tool_pose.translation - scene.start.translation) <= 1.0
            assert rotation_angle_deg(s.tool_pose.rotation, scene.start.rotation) <= 0.5
    assert seq.acc_ee().max() == 0.0


def test_omms_unreachable_goal(scene):
    far = tool_pose({"position": [450, 0, 3000]})
    with pytest.raises(PlanningError) as exc:
        plan_omms(scene, scene.start, [far], seed=0)
    assert exc.value.kind == "no grasp"


def test_omms_needs_goals(scene):
    with pytest.raises(ValueError):
        plan_omms(scene, scene.start, [], seed=0)


# --- slider goal projection --------------------------------------------------


def test_projection_identity():
    p = project_slider_goal(Pose.from_translation(0, 0, 1000), 200.0, 0.0)
    assert np.allclose(p, [-200, 0, 1000])


def test_projection_rotated():
    p = project_slider_goal(Pose(rot_z(90), [10, 20, 1000]), 200.0, 0.0)
    assert np.allclose(p, [10, -180, 1000], atol=1e-9)


def test_projection_lift():
    p = project_slider_goal(Pose.from_translation(0, 0, 900), 200.0, 950.0)
    assert p[2] == pytest.approx(950.0)


def test_projection_rejects_nonpositive_alpha():
    with pytest.raises(ValueError):
        project_slider_goal(Pose(), 0.0, 0.0)


# --- CMMS ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def translate_only(scene):
    """Tool sequence that only translates the tool horizontally."""
    goal = Pose(scene.start.rotation, scene.start.translation + [0.0, -100.0, 0.0])
    omms = plan_omms(scene, scene.start, [goal], seed=0)
    return omms, plan_cmms(omms, scene, seed=0)


def test_cmms_translation_keeps_zero(scene, translate_only):
    _, seq = translate_only
    assert seq.acc_ee().max() == 0.0
    goals = seq.meta["goals"]
    assert all(g.status in ("selected", "discarded") for g in goals)
    assert sum(g.status == "selected" for g in goals) >= len(goals) // 2


def test_cmms_synchronisation(scene, translate_only):
    omms, seq = translate_only
    n_pre = seq.meta["n_pre"]
    follow = seq.states[n_pre:]
    assert len(follow) == len(omms.states)
    for a, b in zip(follow, omms.states):
        assert np.array_equal(a.q_tool_arm, b.q_tool_arm)
        assert a.source_step == b.step
    qc = np.array([s.q_cable_arm for s in seq.states])
    assert np.abs(np.diff(qc, axis=0)).max() <= 5.0 + 1e-9
    assert verify_sequence(scene, seq) == []


def test_cmms_slider_on_the_cable(scene, translate_only):
    _, seq = translate_only
    arm = scene.arm("cable")
    for s in seq.states:
        if s.slider_grasped:
            _, p = fk_batch(arm, s.q_cable_arm)
            assert np.linalg.norm(p[0] - s.slider_pose.translation) <= 2.0


def test_cmms_forced_failure(scene):
    """Boxes around every slider goal leave nothing to keep."""
    goal = Pose(scene.start.rotation, scene.start.translation + [0.0, -100.0, 0.0])
    omms = plan_omms(scene, scene.start, [goal], seed=0)
    blocker = Box(Pose.from_translation(450, -50, 1450), (40, 120, 40))
    with pytest.raises(PlanningError) as exc:
        plan_cmms(omms, scene.with_obstacles([blocker]), seed=0)
    assert exc.value.kind in ("replan OMMS", "no slider grasp")
    if exc.value.kind == "replan OMMS":
        attempts = exc.value.diagnostics["attempts"]
        alphas = sorted({a["alpha_s"] for a in attempts})
        assert alphas == [pytest.approx(0.8 * 250.0), pytest.approx(250.0)]
