import numpy as np
import pytest

from tetherplan.geometry import Pose, pose_from_axes
from tetherplan.grasps import BoxPart, ObjectShape, generate_grasps
from tetherplan.kinematics import default_robot
from tetherplan.workspace import (
    ReachGrid,
    build_reach_grid,
    canonical_orientations,
    manipulability_field,
    manipulability_sphere,
    reachable_points,
    score_balancer_columns,
)

SMALL = ((200.0, 500.0), (-150.0, 150.0), (1200.0, 1500.0))


@pytest.fixture(scope="module")
def robot():
    return default_robot()


@pytest.fixture(scope="module")
def small_grid(robot):
    return build_reach_grid(robot, SMALL, spacing=150.0, seeds=3, seed=1)


def slider_grasps():
    return generate_grasps(ObjectShape("slider", (BoxPart(Pose(), (30, 20, 15), (1, 2), (1, 2)),)))


def test_canonical_orientations_are_rotations():
    Rs = canonical_orientations()
    assert len(Rs) == 6
    zs = {tuple(R[:, 2]) for R in Rs}
    assert len(zs) == 6
    for R in Rs:
        assert np.allclose(R.T @ R, np.eye(3)) and np.linalg.det(R) == pytest.approx(1.0)


def test_mount_reachable_far_point_not(robot):
    ok = reachable_points(robot["right"], np.array([[0.0, -150.0, 1000.0], [10000.0, 0.0, 0.0]]), seeds=10)
    assert ok.tolist() == [True, False]


def test_omega_is_intersection(small_grid):
    assert np.array_equal(small_grid.omega, small_grid.reach_right & small_grid.reach_left)
    assert small_grid.omega.any()


def test_grid_deterministic(robot, small_grid):
    again = build_reach_grid(robot, SMALL, spacing=150.0, seeds=3, seed=1)
    assert np.array_equal(again.reach_right, small_grid.reach_right)
    assert np.array_equal(again.reach_left, small_grid.reach_left)


def test_grid_csv(tmp_path, small_grid):
    path = tmp_path / "grid.csv"
    small_grid.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,z,reach_r,reach_l,omega,M,G"
    assert len(lines) == 1 + int(np.prod(small_grid.dims))
    for line in lines[1:]:
        f = line.split(",")
        assert int(f[5]) == (int(f[3]) & int(f[4]))


def test_column_ranking():
    dims = (3, 3, 4)
    rr = np.zeros(dims, bool)
    rl = np.ones(dims, bool)
    rr[0, 1, :] = True        # x=0, y=0: 4 levels
    rr[2, 1, :3] = True       # x=200, y=0: 3 levels
    rr[2, 0, :3] = True       # x=200, y=-100: 3 levels
    rr[1, 2, :3] = True       # x=100, y=100: 3 levels
    g = ReachGrid(np.array([0.0, -100.0, 0.0]), 100.0, dims, rr, rl)
    cols = score_balancer_columns(g)
    assert cols[0] == (0.0, 0.0, 4)
    assert cols[1:4] == [(200.0, 0.0, 3), (200.0, -100.0, 3), (100.0, 100.0, 3)]
    assert all(c[2] == 0 for c in cols[4:])
    # counting ignores the z order
    g2 = ReachGrid(g.origin, 100.0, dims, rr[:, :, ::-1].copy(), rl)
    assert score_balancer_columns(g2) == cols


def synthetic(M, G):
    dims = M.shape
    ones = np.ones(dims, bool)
    return ReachGrid(np.zeros(3), 50.0, dims, ones, ones, M.astype(float), G.astype(int))


def test_sphere_basic_and_minima():
    rng = np.random.default_rng(0)
    M = rng.uniform(0.5, 1.0, (9, 9, 9))
    G = rng.integers(3, 8, (9, 9, 9))
    M[4, 4, 4], G[4, 4, 4] = 1.0, 6
    g = synthetic(M, G)
    rep = manipulability_sphere(g, (200, 200, 200), 0.8, 0.5)
    assert rep.radius >= 0.0
    assert rep.min_M >= 0.8 * rep.M_ref and rep.min_G >= 0.5 * rep.G_ref
    tighter = manipulability_sphere(g, (200, 200, 200), 0.95, 0.5)
    assert tighter.radius <= rep.radius
    tighter = manipulability_sphere(g, (200, 200, 200), 0.8, 0.9)
    assert tighter.radius <= rep.radius


def test_sphere_radius_exact():
    M = np.ones((7, 7, 7))
    G = np.full((7, 7, 7), 4)
    M[3, 3, 6] = 0.1  # 150 mm above the reference
    rep = manipulability_sphere(synthetic(M, G), (150, 150, 150), 0.8, 0.5)
    assert rep.radius == 100.0


def test_sphere_infeasible_reference():
    g = synthetic(np.zeros((3, 3, 3)), np.zeros((3, 3, 3)))
    with pytest.raises(ValueError, match="reference point has no feasible grasps"):
        manipulability_sphere(g, (50, 50, 50))


def test_field_mean_and_bounds(robot, small_grid):
    grasps = slider_grasps()
    R0 = pose_from_axes((-1.0, 0.0, 0.0)).rotation
    g = manipulability_field(small_grid, robot["left"], grasps, R0, seeds=3, seed=2)
    sel, per = g.meta["per_grasp"]
    Mf, Gf = g.M.ravel(), g.G.ravel()
    assert (Gf[~small_grid.reach_left.ravel()] == 0).all()
    assert (Mf[Gf == 0] == 0).all()
    assert (Gf > 0).any()
    for k, i in enumerate(sel):
        vals = per[k][~np.isnan(per[k])]
        assert len(vals) == Gf[i]
        if len(vals):
            total = 0.0
            for v in vals:
                total += v
            assert Mf[i] == pytest.approx(total / len(vals), rel=1e-12)
            assert vals.min() - 1e-12 <= Mf[i] <= vals.max() + 1e-12


def test_field_single_grasp_equals_its_manipulability(robot):
    R0 = pose_from_axes((-1.0, 0.0, 0.0)).rotation
    dims = (1, 1, 1)
    hits = 0
    for grasp in slider_grasps():
        g = ReachGrid(np.array([400.0, 0.0, 1450.0]), 50.0, dims, np.ones(dims, bool), np.ones(dims, bool))
        manipulability_field(g, robot["left"], [grasp], R0, seeds=6, seed=3)
        _, per = g.meta["per_grasp"]
        if g.G[0, 0, 0] == 1:
            hits += 1
            assert g.M[0, 0, 0] == per[0][0]
        else:
            assert g.M[0, 0, 0] == 0.0 and np.isnan(per[0][0])
    assert hits > 0


def test_unreachable_point_has_no_grasps(robot):
    dims = (1, 1, 1)
    g = ReachGrid(np.array([3000.0, 0.0, 1000.0]), 50.0, dims, np.ones(dims, bool), np.ones(dims, bool))
    manipulability_field(g, robot["left"], slider_grasps(), seeds=2)
    assert g.G[0, 0, 0] == 0 and g.M[0, 0, 0] == 0.0


def test_bad_spacing():
    with pytest.raises(ValueError):
        ReachGrid(np.zeros(3), 0.0, (1, 1, 1), np.ones((1, 1, 1), bool), np.ones((1, 1, 1), bool))
