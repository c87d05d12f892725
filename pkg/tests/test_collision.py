import numpy as np
import pytest

from tetherplan.collision import (
    MovingArmChecker,
    SceneObstacles,
    arm_static_capsules,
    cable_clear,
    robot_collision_free,
)
from tetherplan.geometry import Box, Pose
from tetherplan.kinematics import default_robot, forward_kinematics


@pytest.fixture(scope="module")
def robot():
    return default_robot()


def capsules(arm, q):
    _, caps = forward_kinematics(arm, q)
    return [(s.a, s.b, r) for s, r in caps]


def sample(a, b, step=2.0):
    n = max(2, int(np.ceil(np.linalg.norm(b - a) / step)) + 1)
    return a + (b - a) * np.linspace(0, 1, n)[:, None]


def point_segment(p, a, b):
    d = b - a
    t = np.clip(((p - a) @ d) / max(d @ d, 1e-12), 0, 1)
    return np.linalg.norm(p - (a + t[:, None] * d), axis=1)


def point_box(p, box):
    local = box.pose.inverse().apply(p)
    return np.linalg.norm(np.maximum(np.abs(local) - box.half_extents, 0), axis=1)


def oracle_clearance(robot, qs, obstacles):
    """Point-sampled robot clearance with the same exemptions (adjacent links)."""
    arms = [capsules(robot["right"], qs[0]), capsules(robot["left"], qs[1])]
    items = [(k, i, c) for k, caps in enumerate(arms) for i, c in enumerate(caps)]
    worst = np.inf
    for x in range(len(items)):
        k1, i1, (a1, b1, r1) = items[x]
        pts = sample(a1, b1)
        for y in range(x + 1, len(items)):
            k2, i2, (a2, b2, r2) = items[y]
            if k1 == k2 and abs(i1 - i2) < 2:
                continue
            worst = min(worst, point_segment(pts, a2, b2).min() - r1 - r2)
        for _, bx in obstacles.all_boxes():
            worst = min(worst, point_box(pts, bx).min() - r1)
    return worst


def test_home_is_free(robot):
    rep = robot_collision_free([(robot["right"], robot["right"].home), (robot["left"], robot["left"].home)])
    assert rep.free and rep.pair is None


def test_box_on_hand_reported(robot):
    arm = robot["right"]
    pose, _ = forward_kinematics(arm, arm.home)
    obs = SceneObstacles((Box(Pose.from_translation(pose.translation), (20, 20, 20)),))
    rep = robot_collision_free([(arm, arm.home), (robot["left"], robot["left"].home)], obstacles=obs)
    assert not rep.free
    assert rep.pair[0] == "right.link6" and rep.pair[1] == "box0"


def test_matches_point_sampling_oracle(robot):
    rng = np.random.default_rng(21)
    table = Box(Pose.from_translation(550, 0, 650), (350, 700, 50))
    obs = SceneObstacles((Box(Pose.from_translation(400, 0, 1200), (60, 60, 60)),), table, 5.0)
    disagreements = 0
    for _ in range(200):
        qs = [robot["right"].random_q(rng), robot["left"].random_q(rng)]
        rep = robot_collision_free([(robot["right"], qs[0]), (robot["left"], qs[1])], obstacles=obs)
        ref = oracle_clearance(robot, qs, obs)
        assert rep.clearance <= ref + 1e-9
        assert ref - rep.clearance <= 1.0
        if abs(ref - obs.margin) > 1.0:
            disagreements += rep.free != (ref > obs.margin)
    assert disagreements == 0


def test_moving_checker_agrees_with_full_check(robot):
    rng = np.random.default_rng(8)
    right, left = robot["right"], robot["left"]
    obs = SceneObstacles((), Box(Pose.from_translation(550, 0, 650), (350, 700, 50)), 5.0)
    static = arm_static_capsules(left, left.home)
    checker = MovingArmChecker(right, obs, static=static)
    qs = right.random_q(rng, 100)
    fast = checker.clearance(qs)
    for q, c in zip(qs, fast):
        full = robot_collision_free([(right, q), (left, left.home)], obstacles=obs)
        # the full check also includes left-arm self pairs, which are constant here
        left_self = robot_collision_free([(left, left.home)]).clearance
        assert min(c, left_self) == pytest.approx(full.clearance, abs=1e-9)


def test_far_vertical_cable_is_clear(robot):
    arms = [(robot["right"], robot["right"].home), (robot["left"], robot["left"].home)]
    clear, cl, who = cable_clear(np.array([[1500.0, 0, 1000], [1500.0, 0, 2000]]), arms)
    assert clear and who is None and cl > 500


def test_cable_through_box_blocked(robot):
    arms = [(robot["right"], robot["right"].home)]
    obs = SceneObstacles((Box(Pose.from_translation(1500, 0, 1500), (50, 50, 50)),))
    clear, cl, who = cable_clear(np.array([[1500.0, 0, 1000], [1500.0, 0, 2000]]), arms, obs)
    assert not clear and who == "box0" and cl == 0.0


@pytest.mark.parametrize("offset", [4.0, 4.6, 5.4, 6.0])
def test_grazing_box_boundary(offset):
    obs = SceneObstacles((Box(Pose.from_translation(0, 0, 0), (50, 50, 50)),), None, 5.0)
    pts = np.array([[50.0 + offset, -200, 0], [50.0 + offset, 200, 0]])
    clear, cl, _ = cable_clear(pts, [], obs)
    ref = point_box(sample(pts[0], pts[1], 0.5), obs.boxes[0]).min()
    assert abs(cl - ref) <= 0.5
    assert clear == (offset > 5.0)


def test_margin_monotone_and_exemption(robot):
    rng = np.random.default_rng(9)
    arm = robot["right"]
    for _ in range(50):
        q = arm.random_q(rng)
        pose, _ = forward_kinematics(arm, q)
        pts = np.array([pose.translation + rng.normal(0, 30, 3), pose.translation + [0, 0, 600.0]])
        arms = [(arm, q)]
        exempt = {(0, 5)}
        small = cable_clear(pts, arms, exempt=exempt, margin=1.0)[0]
        big = cable_clear(pts, arms, exempt=exempt, margin=30.0)[0]
        assert small or not big
        strict = cable_clear(pts, arms, margin=5.0)[0]
        loose = cable_clear(pts, arms, exempt=exempt, margin=5.0)[0]
        assert loose or not strict
