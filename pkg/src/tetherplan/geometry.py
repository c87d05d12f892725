"""Rigid transforms and closest-distance queries between segments, capsules and boxes.

All lengths are millimetres. Angles at the public boundary are degrees.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EPS = 1e-12
# accepted drift for user supplied rotations; compose re-orthonormalizes
_ORTHO_TOL = 1e-6


def rot_axis(axis, angle_deg: float) -> np.ndarray:
    """Rotation matrix about ``axis`` by ``angle_deg`` (Rodrigues)."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    th = np.deg2rad(angle_deg)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(th) * K + (1.0 - np.cos(th)) * (K @ K)


def rot_x(angle_deg):
    return rot_axis((1, 0, 0), angle_deg)


def rot_y(angle_deg):
    return rot_axis((0, 1, 0), angle_deg)


def rot_z(angle_deg):
    return rot_axis((0, 0, 1), angle_deg)


def orthonormalize(R: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(R)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out


def rotation_angle_deg(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic angle between two rotations."""
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return float(np.rad2deg(np.arccos(np.clip(c, -1.0, 1.0))))


def rotvec_from_matrix(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector (radians) of a rotation matrix."""
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    th = np.arccos(c)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if th < 1e-9:
        return 0.5 * w
    if np.pi - th < 1e-6:
        # near pi: axis from the symmetric part
        M = (R + np.eye(3)) / 2.0
        i = int(np.argmax(np.diag(M)))
        axis = M[:, i] / np.sqrt(max(M[i, i], _EPS))
        return axis * th
    return w * th / (2.0 * np.sin(th))


@dataclass(frozen=True)
class Pose:
    """Rigid transform mapping local coordinates into the parent frame."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if np.abs(R.T @ R - np.eye(3)).max() > _ORTHO_TOL or np.linalg.det(R) <= 0.0:
            raise ValueError("rotation must be orthonormal with determinant +1")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_translation(cls, x, y=None, z=None) -> "Pose":
        if y is None:
            return cls(np.eye(3), x)
        return cls(np.eye(3), (x, y, z))

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def apply(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p @ self.rotation.T + self.translation

    def apply_vector(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.rotation.T

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def is_close(self, other: "Pose", tol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=tol, rtol=0)
            and np.allclose(self.translation, other.translation, atol=tol, rtol=0)
        )

    def to_list(self) -> list:
        return [*self.rotation.ravel().tolist(), *self.translation.tolist()]

    @classmethod
    def from_list(cls, values) -> "Pose":
        v = np.asarray(values, dtype=float)
        return cls(v[:9].reshape(3, 3), v[9:12])


def compose(a: Pose, b: Pose) -> Pose:
    """Apply ``b`` then ``a``: the result maps b-local points into a's parent frame."""
    R = a.rotation @ b.rotation
    drift = np.abs(R @ R.T - np.eye(3)).max()
    if drift > 1e-12:
        R = orthonormalize(R)
    return Pose(R, a.rotation @ b.translation + a.translation)


def pose_from_axes(x_axis, z_hint=(0.0, 0.0, 1.0), origin=(0.0, 0.0, 0.0)) -> Pose:
    """Frame whose x axis is ``x_axis`` and whose z axis is as close to ``z_hint`` as possible."""
    x = np.asarray(x_axis, dtype=float)
    x = x / np.linalg.norm(x)
    h = np.asarray(z_hint, dtype=float)
    z = h - np.dot(h, x) * x
    if np.linalg.norm(z) < 1e-6:
        alt = np.array([1.0, 0.0, 0.0]) if abs(x[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        z = alt - np.dot(alt, x) * x
    z = z / np.linalg.norm(z)
    y = np.cross(z, x)
    return Pose(np.column_stack([x, y, z]), origin)


@dataclass(frozen=True)
class Segment:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.array(self.a, dtype=float).reshape(3))
        object.__setattr__(self, "b", np.array(self.b, dtype=float).reshape(3))

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))

    def transformed(self, pose: Pose) -> "Segment":
        return Segment(pose.apply(self.a), pose.apply(self.b))


@dataclass(frozen=True)
class Box:
    """Oriented box: ``pose`` places the box centre, ``half_extents`` in the box frame."""

    pose: Pose
    half_extents: np.ndarray

    def __post_init__(self):
        h = np.array(self.half_extents, dtype=float).reshape(3)
        if np.any(h <= 0):
            raise ValueError(f"box half extents must be positive, got {h}")
        object.__setattr__(self, "half_extents", h)

    @property
    def top(self) -> float:
        corners = self.corners()
        return float(corners[:, 2].max())

    def corners(self) -> np.ndarray:
        s = np.array([[i, j, k] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)], dtype=float)
        return self.pose.apply(s * self.half_extents)

    def contains(self, p, pad: float = 0.0) -> np.ndarray:
        local = self.pose.inverse().apply(p)
        return np.all(np.abs(local) <= self.half_extents + pad, axis=-1)


# ---------------------------------------------------------------------------
# segment / segment


def segment_segment_distance_batch(p1, q1, p2, q2):
    """Vectorised closest points between segment arrays ``p1q1`` and ``p2q2``.

    Inputs broadcast to (..., 3). Returns (distance, c1, c2).
    """
    p1, q1, p2, q2 = np.broadcast_arrays(
        np.asarray(p1, float), np.asarray(q1, float), np.asarray(p2, float), np.asarray(q2, float)
    )
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("...i,...i->...", d1, d1)
    e = np.einsum("...i,...i->...", d2, d2)
    f = np.einsum("...i,...i->...", d2, r)
    c = np.einsum("...i,...i->...", d1, r)
    b = np.einsum("...i,...i->...", d1, d2)

    a_deg = a <= _EPS
    e_deg = e <= _EPS
    safe_a = np.where(a_deg, 1.0, a)
    safe_e = np.where(e_deg, 1.0, e)

    denom = a * e - b * b
    par = denom <= _EPS * np.maximum(a * e, 1.0)
    s = np.where(par, 0.0, np.clip((b * f - c * e) / np.where(par, 1.0, denom), 0.0, 1.0))
    t = (b * s + f) / safe_e
    # t outside [0,1]: clamp and recompute s
    t_lo = t < 0.0
    t_hi = t > 1.0
    s = np.where(t_lo, np.clip(-c / safe_a, 0.0, 1.0), s)
    s = np.where(t_hi, np.clip((b - c) / safe_a, 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)

    # degenerate segments
    s = np.where(e_deg, np.clip(-c / safe_a, 0.0, 1.0), s)
    t = np.where(e_deg, 0.0, t)
    t = np.where(a_deg, np.clip(f / safe_e, 0.0, 1.0), t)
    s = np.where(a_deg, 0.0, s)
    both = a_deg & e_deg
    s = np.where(both, 0.0, s)
    t = np.where(both, 0.0, t)

    c1 = p1 + d1 * s[..., None]
    c2 = p2 + d2 * t[..., None]
    dist = np.linalg.norm(c1 - c2, axis=-1)
    return dist, c1, c2


def segment_segment_distance(s1: Segment, s2: Segment):
    """Minimum distance between two segments and the witness points.

    The computation is run in both argument orders and the smaller result kept,
    which makes the value exactly symmetric.
    """
    d12, c1, c2 = segment_segment_distance_batch(s1.a, s1.b, s2.a, s2.b)
    d21, e2, e1 = segment_segment_distance_batch(s2.a, s2.b, s1.a, s1.b)
    if d21 < d12:
        return float(d21), (e1, e2)
    return float(d12), (c1, c2)


def segment_capsule_distance(s: Segment, axis: Segment, radius: float) -> float:
    """Signed clearance between a segment and a capsule; negative means penetration."""
    if radius < 0:
        raise ValueError("capsule radius must be non-negative")
    d, _ = segment_segment_distance(s, axis)
    return d - radius


# ---------------------------------------------------------------------------
# segment / box


def segment_box_distance_local(a, b, half):
    """Exact distance between segments and an axis-aligned box centred at the origin.

    ``a``, ``b``: (..., 3) endpoints already in the box frame; ``half``: (..., 3).
    Squared distance along the segment is a convex piecewise quadratic whose
    pieces are separated by the slab-plane crossings; each piece is minimised
    in closed form.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    a, b = np.broadcast_arrays(a, b)
    half = np.broadcast_to(np.asarray(half, float), a.shape)
    d = b - a
    shape = a.shape[:-1]

    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = (-half - a) / d
        t_hi = (half - a) / d
    brk = np.concatenate([t_lo, t_hi], axis=-1)
    brk = np.where(np.isfinite(brk), np.clip(brk, 0.0, 1.0), 0.0)
    ts = np.sort(np.concatenate([np.zeros(shape + (1,)), brk, np.ones(shape + (1,))], axis=-1), axis=-1)

    best = np.full(shape, np.inf)
    for k in range(ts.shape[-1] - 1):
        lo = ts[..., k]
        hi = ts[..., k + 1]
        mid = 0.5 * (lo + hi)
        pm = a + d * mid[..., None]
        above = pm > half
        below = pm < -half
        # contribution: (a + t d - edge)^2 on active axes
        edge = np.where(above, half, np.where(below, -half, 0.0))
        active = above | below
        off = np.where(active, a - edge, 0.0)
        dd = np.where(active, d, 0.0)
        A = np.sum(dd * dd, axis=-1)
        B = 2.0 * np.sum(dd * off, axis=-1)
        C = np.sum(off * off, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            tstar = np.where(A > _EPS, -B / (2.0 * A), lo)
        tstar = np.clip(tstar, lo, hi)
        val = A * tstar * tstar + B * tstar + C
        best = np.minimum(best, val)
    return np.sqrt(np.maximum(best, 0.0))


def segment_box_distance(s: Segment, box: Box) -> float:
    inv = box.pose.inverse()
    return float(segment_box_distance_local(inv.apply(s.a), inv.apply(s.b), box.half_extents))


def segments_boxes_distance(a, b, boxes: list) -> np.ndarray:
    """Distance matrix (n_segments, n_boxes) between segment arrays and boxes."""
    a = np.atleast_2d(np.asarray(a, float))
    b = np.atleast_2d(np.asarray(b, float))
    out = np.empty((a.shape[0], len(boxes)))
    for j, box in enumerate(boxes):
        inv = box.pose.inverse()
        out[:, j] = segment_box_distance_local(inv.apply(a), inv.apply(b), box.half_extents)
    return out


def point_box_distance(p, box: Box) -> np.ndarray:
    local = box.pose.inverse().apply(p)
    q = np.abs(local) - box.half_extents
    return np.linalg.norm(np.maximum(q, 0.0), axis=-1)
