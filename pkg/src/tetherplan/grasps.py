"""Antipodal grasp sampling on box/cylinder objects and the grasp database file.

Hand frame convention: z is the approach direction (palm towards object), y is
the finger closing axis, x = y cross z. The hand pose origin is the grasp
centre between the finger pads.

Database format (text, one grasp per line, ``#`` starts a comment)::

    <object> r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz width

rotation row-major, translation and width in mm, all in the object frame.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Pose, compose


@dataclass(frozen=True)
class BoxPart:
    pose: Pose
    half_extents: tuple
    grasp_axes: tuple = (0, 1, 2)
    approach_axes: tuple = (0, 1, 2)


@dataclass(frozen=True)
class CylinderPart:
    """Cylinder along the part's local z axis."""

    pose: Pose
    radius: float
    half_length: float


@dataclass(frozen=True)
class ObjectShape:
    name: str
    parts: tuple

    def capsules(self, pose: Pose = Pose()) -> list:
        """Conservative capsule cover (segment endpoints, radius) of every part in ``pose``."""
        out = []
        for part in self.parts:
            world = compose(pose, part.pose)
            if isinstance(part, BoxPart):
                h = np.asarray(part.half_extents, float)
                k = int(np.argmax(h))
                others = [i for i in range(3) if i != k]
                r = float(np.linalg.norm(h[others]))
                e = np.zeros(3)
                e[k] = h[k]
                out.append((world.apply(-e), world.apply(e), r))
            else:
                e = np.array([0.0, 0.0, part.half_length])
                out.append((world.apply(-e), world.apply(e), float(part.radius)))
        return out

    def surface_distance(self, points) -> np.ndarray:
        """Unsigned distance from points to the closest part surface."""
        pts = np.atleast_2d(np.asarray(points, float))
        best = np.full(len(pts), np.inf)
        for part in self.parts:
            local = part.pose.inverse().apply(pts)
            if isinstance(part, BoxPart):
                h = np.asarray(part.half_extents, float)
                q = np.abs(local) - h
                outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
                inside = -np.minimum(q.max(axis=1), 0.0)
                d = np.where(outside > 0, outside, inside)
            else:
                radial = np.linalg.norm(local[:, :2], axis=1) - part.radius
                axial = np.abs(local[:, 2]) - part.half_length
                q = np.stack([radial, axial], axis=1)
                outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
                inside = -np.minimum(q.max(axis=1), 0.0)
                d = np.where(outside > 0, outside, inside)
            best = np.minimum(best, d)
        return best


@dataclass(frozen=True)
class GripperSpec:
    min_width: float = 0.0
    max_width: float = 80.0
    finger_depth: float = 40.0
    pad_half_width: float = 10.0


@dataclass(frozen=True)
class GraspCandidate:
    hand_pose_local: Pose
    gripper_width: float

    @property
    def approach_dir_local(self) -> np.ndarray:
        return self.hand_pose_local.rotation[:, 2].copy()


def _hand_pose(approach, closing, center) -> Pose:
    z = np.asarray(approach, float)
    y = np.asarray(closing, float)
    x = np.cross(y, z)
    return Pose(np.column_stack([x, y, z]), center)


def _box_grasps(part: BoxPart, gripper: GripperSpec, n_positions: int) -> list:
    h = np.asarray(part.half_extents, float)
    eye = np.eye(3)
    out = []
    for a in part.grasp_axes:
        width = 2.0 * h[a]
        if not (gripper.min_width < width <= gripper.max_width):
            continue
        for d in part.approach_axes:
            if d == a or h[d] > gripper.finger_depth:
                continue
            slide = 3 - a - d
            span = h[slide] - gripper.pad_half_width
            if span > 0 and n_positions > 1:
                offsets = np.linspace(-span, span, n_positions)
            else:
                offsets = np.zeros(1)
            for side in (1.0, -1.0):
                approach = -side * eye[d]
                for off in offsets:
                    center = off * eye[slide]
                    for flip in (1.0, -1.0):
                        local = _hand_pose(approach, flip * eye[a], center)
                        out.append(GraspCandidate(compose(part.pose, local), float(width)))
    return out


def _cylinder_grasps(part: CylinderPart, gripper: GripperSpec, n_positions: int, n_angles: int = 4) -> list:
    width = 2.0 * part.radius
    if not (gripper.min_width < width <= gripper.max_width) or part.radius > gripper.finger_depth:
        return []
    span = part.half_length - gripper.pad_half_width
    offsets = np.linspace(-span, span, n_positions) if span > 0 and n_positions > 1 else np.zeros(1)
    out = []
    for k in range(n_angles):
        ang = 2.0 * np.pi * k / n_angles
        closing = np.array([np.cos(ang), np.sin(ang), 0.0])
        approach = np.array([-np.sin(ang), np.cos(ang), 0.0])
        for off in offsets:
            for flip in (1.0, -1.0):
                local = _hand_pose(approach, flip * closing, (0.0, 0.0, off))
                out.append(GraspCandidate(compose(part.pose, local), float(width)))
    return out


def generate_grasps(shape: ObjectShape, gripper: GripperSpec = GripperSpec(), n_positions: int = 3) -> list:
    """Antipodal side grasps on every graspable face pair of every part.

    Deterministic; an object with no face pair inside the gripper range yields [].
    """
    out = []
    for part in shape.parts:
        if isinstance(part, BoxPart):
            out.extend(_box_grasps(part, gripper, n_positions))
        else:
            out.extend(_cylinder_grasps(part, gripper, n_positions))
    return out


def grasp_world_pose(grasp: GraspCandidate, object_pose: Pose) -> Pose:
    return compose(object_pose, grasp.hand_pose_local)


def object_pose_from_hand(hand_pose: Pose, grasp: GraspCandidate) -> Pose:
    return compose(hand_pose, grasp.hand_pose_local.inverse())


def pad_points(grasp: GraspCandidate, object_pose: Pose = Pose()) -> np.ndarray:
    hp = grasp_world_pose(grasp, object_pose)
    y = hp.rotation[:, 1]
    half = grasp.gripper_width / 2.0
    return np.array([hp.translation + half * y, hp.translation - half * y])


# ---------------------------------------------------------------------------
# database file


def save_grasp_db(path, db: dict) -> None:
    lines = ["# object r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz width"]
    for name in sorted(db):
        for g in db[name]:
            vals = [*g.hand_pose_local.rotation.ravel(), *g.hand_pose_local.translation, g.gripper_width]
            lines.append(name + " " + " ".join(f"{v:.12g}" for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def load_grasp_db(path) -> dict:
    db: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 14:
            raise ValueError(f"{path}:{lineno}: expected 14 fields, got {len(parts)}")
        vals = np.array([float(v) for v in parts[1:]])
        pose = Pose(vals[:9].reshape(3, 3), vals[9:12])
        db.setdefault(parts[0], []).append(GraspCandidate(pose, float(vals[12])))
    return db
