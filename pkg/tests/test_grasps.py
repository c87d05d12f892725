import numpy as np
import pytest

from tetherplan.geometry import Pose, compose, rot_x, rot_z
from tetherplan.grasps import (
    BoxPart,
    CylinderPart,
    GripperSpec,
    ObjectShape,
    generate_grasps,
    grasp_world_pose,
    load_grasp_db,
    object_pose_from_hand,
    pad_points,
    save_grasp_db,
)
from tetherplan.scene import load_scene


def box(half, **kw):
    return ObjectShape("box", (BoxPart(Pose(), tuple(half), **kw),))


def test_cube_grasps_have_width_40():
    gs = generate_grasps(box((20, 20, 20)), GripperSpec(0.0, 80.0))
    assert gs
    assert {g.gripper_width for g in gs} == {40.0}
    closing = {tuple(np.round(np.abs(g.hand_pose_local.rotation[:, 1]))) for g in gs}
    assert len(closing) == 3  # every pair of parallel faces is used


def test_wide_cylinder_has_no_grasps():
    cyl = ObjectShape("c", (CylinderPart(Pose(), 100.0, 50.0),))
    assert generate_grasps(cyl, GripperSpec(0.0, 80.0)) == []


def test_cylinder_grasps_close_radially():
    cyl = ObjectShape("c", (CylinderPart(Pose(), 20.0, 60.0),))
    gs = generate_grasps(cyl, GripperSpec(0.0, 80.0), n_positions=3)
    assert len(gs) >= 8
    for g in gs:
        assert abs(g.hand_pose_local.rotation[2, 1]) < 1e-12


def test_default_objects_have_enough_grasps():
    scene = load_scene()
    for name in (scene.tool.name, scene.slider.name):
        gs = scene.grasps[name]
        assert len(gs) >= 8
        keys = {tuple(np.round(g.hand_pose_local.to_list(), 6)) for g in gs}
        assert len(keys) == len(gs)


def test_grasps_deterministic():
    a = generate_grasps(box((30, 20, 15)))
    b = generate_grasps(box((30, 20, 15)))
    assert all(x.hand_pose_local.is_close(y.hand_pose_local, 0.0) for x, y in zip(a, b))


def test_pads_touch_the_object():
    scene = load_scene()
    for name, shape in ((scene.tool.name, scene.tool), (scene.slider.name, scene.slider)):
        for g in scene.grasps[name]:
            gap = shape.surface_distance(pad_points(g))
            assert gap.max() <= 1.0
            assert scene.gripper.min_width < g.gripper_width <= scene.gripper.max_width
            assert np.linalg.norm(g.approach_dir_local) == pytest.approx(1.0, abs=1e-9)


def test_world_pose_identity_and_translation():
    g = generate_grasps(box((30, 20, 15)))[0]
    assert grasp_world_pose(g, Pose()).is_close(g.hand_pose_local)
    moved = grasp_world_pose(g, Pose.from_translation(100, 0, 0))
    assert np.allclose(moved.translation - g.hand_pose_local.translation, [100, 0, 0])


def test_world_pose_two_path_marker():
    g = generate_grasps(box((30, 20, 15)))[3]
    O = Pose(rot_z(90), [10, 20, 30])
    marker = np.array([5.0, -7.0, 11.0])  # in the hand frame
    via_pose = grasp_world_pose(g, O).apply(marker)
    via_chain = O.apply(g.hand_pose_local.apply(marker))
    assert np.allclose(via_pose, via_chain, atol=1e-9)


def test_equivariance():
    rng = np.random.default_rng(4)
    gs = generate_grasps(box((30, 20, 15)))
    for g in gs:
        D = Pose(rot_z(rng.uniform(-180, 180)) @ rot_x(rng.uniform(-180, 180)), rng.uniform(-500, 500, 3))
        O = Pose(rot_x(rng.uniform(-180, 180)), rng.uniform(-500, 500, 3))
        lhs = grasp_world_pose(g, compose(D, O))
        rhs = compose(D, grasp_world_pose(g, O))
        assert np.allclose(lhs.matrix(), rhs.matrix(), atol=1e-9)
        assert object_pose_from_hand(grasp_world_pose(g, O), g).is_close(O, 1e-9)


def test_db_roundtrip(tmp_path):
    scene = load_scene()
    path = tmp_path / "grasps.txt"
    save_grasp_db(path, scene.grasps)
    db = load_grasp_db(path)
    for name, gs in scene.grasps.items():
        assert len(db[name]) == len(gs)
        for a, b in zip(db[name], gs):
            assert a.hand_pose_local.is_close(b.hand_pose_local, 1e-9)
            assert a.gripper_width == b.gripper_width


def test_db_rejects_bad_record(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("tool 1 0 0\n")
    with pytest.raises(ValueError):
        load_grasp_db(path)
