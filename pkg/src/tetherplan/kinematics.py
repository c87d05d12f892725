"""Serial-arm kinematics: forward kinematics, geometric Jacobian, manipulability
and a damped least-squares IK solver with random restarts.

Joint vectors are plain float arrays in degrees. Everything that runs inside
the planners goes through the batched helpers (``fk_batch``, ``ik_batch``), the
single-configuration functions are thin wrappers around them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, Segment

# translation rows of the IK task are scaled so 100 mm weighs like 1 rad
_POS_SCALE = 0.01
_STALL_WINDOW = 15
_STALL_RATIO = 0.5


@dataclass(frozen=True)
class Joint:
    axis: np.ndarray
    translation: np.ndarray  # from the parent joint frame, mm

    def __post_init__(self):
        a = np.array(self.axis, dtype=float).reshape(3)
        object.__setattr__(self, "axis", a / np.linalg.norm(a))
        object.__setattr__(self, "translation", np.array(self.translation, dtype=float).reshape(3))


@dataclass(frozen=True)
class Capsule:
    axis: Segment
    radius: float


@dataclass(frozen=True)
class ArmModel:
    """Revolute serial arm.

    ``link_capsules[i]`` is rigidly attached to the frame of joint ``i`` (after
    its rotation); ``flange`` is the tool-centre-point offset from the last joint.
    """

    name: str
    joints: tuple
    limits: np.ndarray  # (n, 2) degrees
    base: Pose = field(default_factory=Pose)
    flange: Pose = field(default_factory=Pose)
    link_capsules: tuple = ()
    home: np.ndarray | None = None

    def __post_init__(self):
        lim = np.array(self.limits, dtype=float).reshape(-1, 2)
        if len(self.joints) < 6:
            raise ValueError("an arm needs at least 6 joints for full pose placement")
        if lim.shape[0] != len(self.joints):
            raise ValueError("one (min, max) limit pair per joint required")
        if np.any(lim[:, 0] >= lim[:, 1]):
            raise ValueError("joint limits must satisfy min < max")
        lim.flags.writeable = False
        object.__setattr__(self, "limits", lim)
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "link_capsules", tuple(self.link_capsules))
        if self.home is not None:
            object.__setattr__(self, "home", np.array(self.home, dtype=float))
        ks = []
        for j in self.joints:
            k = j.axis
            K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
            ks.append((K, K @ K))
        object.__setattr__(self, "_skew", tuple(ks))

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def lower(self) -> np.ndarray:
        return self.limits[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self.limits[:, 1]

    @property
    def midpoint(self) -> np.ndarray:
        return self.limits.mean(axis=1)

    def within_limits(self, q, tol: float = 1e-9) -> bool:
        q = np.asarray(q, float)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def random_q(self, rng: np.random.Generator, size=None, shrink: float = 0.0) -> np.ndarray:
        span = self.upper - self.lower
        lo = self.lower + shrink * span
        hi = self.upper - shrink * span
        shape = (self.n,) if size is None else (size, self.n)
        return rng.uniform(lo, hi, size=shape)

    def reach(self) -> float:
        """Upper bound on the distance from the first joint to the TCP."""
        return float(sum(np.linalg.norm(j.translation) for j in self.joints[1:]) + np.linalg.norm(self.flange.translation))

    def shoulder(self) -> np.ndarray:
        return self.base.apply(self.joints[0].translation)


def _check_q(arm: ArmModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != arm.n:
        raise ValueError(f"joint vector length {q.shape[-1]} does not match arm with {arm.n} joints")
    return q


def fk_batch(arm: ArmModel, q, frames: bool = False):
    """Forward kinematics for configurations ``q`` (B, n) in degrees.

    Returns (R_ee (B,3,3), p_ee (B,3)) and, with ``frames``, also the joint
    origins (B,n,3), joint axes in world (B,n,3) and joint frame rotations (B,n,3,3).
    """
    q = np.atleast_2d(_check_q(arm, q))
    B = q.shape[0]
    th = np.deg2rad(q)
    s = np.sin(th)
    c = 1.0 - np.cos(th)
    R = np.broadcast_to(arm.base.rotation, (B, 3, 3)).copy()
    p = np.broadcast_to(arm.base.translation, (B, 3)).copy()
    if frames:
        origins = np.empty((B, arm.n, 3))
        axes = np.empty((B, arm.n, 3))
        rots = np.empty((B, arm.n, 3, 3))
    eye = np.eye(3)
    for i, joint in enumerate(arm.joints):
        p = p + R @ joint.translation
        K, K2 = arm._skew[i]
        if frames:
            origins[:, i] = p
            axes[:, i] = R @ joint.axis
        Rj = eye + s[:, i, None, None] * K + c[:, i, None, None] * K2
        R = R @ Rj
        if frames:
            rots[:, i] = R
    p_ee = p + R @ arm.flange.translation
    R_ee = R @ arm.flange.rotation
    if frames:
        return R_ee, p_ee, origins, axes, rots
    return R_ee, p_ee


def forward_kinematics(arm: ArmModel, q):
    """End-effector pose and world link capsules for one configuration.

    Returns ``(Pose, [(Segment, radius), ...])``.
    """
    q = _check_q(arm, q)
    if q.ndim != 1:
        raise ValueError("forward_kinematics expects a single joint vector")
    R, p, origins, _, rots = fk_batch(arm, q[None], frames=True)
    caps = []
    for i, cap in enumerate(arm.link_capsules):
        a = origins[0, i] + rots[0, i] @ cap.axis.a
        b = origins[0, i] + rots[0, i] @ cap.axis.b
        caps.append((Segment(a, b), cap.radius))
    return Pose(R[0], p[0]), caps


def link_capsules_batch(arm: ArmModel, q):
    """World capsule endpoints for many configurations: (a (B,L,3), b (B,L,3), radii (L,))."""
    _, _, origins, _, rots = fk_batch(arm, q, frames=True)
    ca = np.array([c.axis.a for c in arm.link_capsules])
    cb = np.array([c.axis.b for c in arm.link_capsules])
    L = len(arm.link_capsules)
    a = origins[:, :L] + np.einsum("blij,lj->bli", rots[:, :L], ca)
    b = origins[:, :L] + np.einsum("blij,lj->bli", rots[:, :L], cb)
    return a, b, np.array([c.radius for c in arm.link_capsules])


def jacobian_batch(arm: ArmModel, q):
    """Geometric Jacobians (B, 6, n); translational rows mm/rad, rotational rows rad/rad."""
    R, p, origins, axes, _ = fk_batch(arm, q, frames=True)
    Jv = np.cross(axes, p[:, None, :] - origins)
    J = np.concatenate([Jv.transpose(0, 2, 1), axes.transpose(0, 2, 1)], axis=1)
    return J, R, p


def jacobian(arm: ArmModel, q) -> np.ndarray:
    q = _check_q(arm, q)
    J, _, _ = jacobian_batch(arm, q[None])
    return J[0]


def joint_limit_penalty(arm: ArmModel, q) -> np.ndarray:
    """Product over joints of 4 (q - lo)(hi - q) / (hi - lo)^2, in [0, 1]."""
    q = np.asarray(q, float)
    lo, hi = arm.lower, arm.upper
    f = 4.0 * (q - lo) * (hi - q) / (hi - lo) ** 2
    return np.prod(np.clip(f, 0.0, 1.0), axis=-1)


def yoshikawa(J) -> np.ndarray:
    JJt = J @ np.swapaxes(J, -1, -2)
    return np.sqrt(np.maximum(np.linalg.det(JJt), 0.0))


def manipulability(arm: ArmModel, q) -> float:
    """Yoshikawa measure scaled by the joint-limit penalty; exactly 0 at a limit."""
    q = _check_q(arm, q)
    return float(yoshikawa(jacobian(arm, q)) * joint_limit_penalty(arm, q))


def manipulability_batch(arm: ArmModel, q) -> np.ndarray:
    J, _, _ = jacobian_batch(arm, q)
    return yoshikawa(J) * joint_limit_penalty(arm, q)


# ---------------------------------------------------------------------------
# inverse kinematics


def _rotvec_batch(R):
    """Axis-angle vectors (radians) for rotation matrices (B,3,3), robust near pi."""
    tr = np.trace(R, axis1=-2, axis2=-1)
    # Shepperd: choose the largest of w, x, y, z
    diag = np.stack([tr, R[:, 0, 0], R[:, 1, 1], R[:, 2, 2]], axis=-1)
    k = np.argmax(diag, axis=-1)
    B = R.shape[0]
    quat = np.empty((B, 4))
    m = k == 0
    if np.any(m):
        r = R[m]
        w = 0.5 * np.sqrt(np.maximum(1.0 + tr[m], 0.0))
        f = 0.25 / w
        quat[m] = np.stack([w, (r[:, 2, 1] - r[:, 1, 2]) * f, (r[:, 0, 2] - r[:, 2, 0]) * f, (r[:, 1, 0] - r[:, 0, 1]) * f], -1)
    for axis in range(3):
        m = k == axis + 1
        if not np.any(m):
            continue
        r = R[m]
        i, j, l = axis, (axis + 1) % 3, (axis + 2) % 3
        v = 0.5 * np.sqrt(np.maximum(1.0 + r[:, i, i] - r[:, j, j] - r[:, l, l], 0.0))
        f = 0.25 / v
        q = np.empty((r.shape[0], 4))
        q[:, 0] = (r[:, l, j] - r[:, j, l]) * f
        q[:, 1 + i] = v
        q[:, 1 + j] = (r[:, j, i] + r[:, i, j]) * f
        q[:, 1 + l] = (r[:, l, i] + r[:, i, l]) * f
        quat[m] = q
    # hemisphere with w >= 0
    quat *= np.where(quat[:, :1] < 0, -1.0, 1.0)
    vn = np.linalg.norm(quat[:, 1:], axis=-1)
    ang = 2.0 * np.arctan2(vn, quat[:, 0])
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(vn > 1e-12, ang / vn, 2.0)
    return quat[:, 1:] * scale[:, None]


def _task_error(R, p, tR, tp, axis):
    """Stacked task error (B,6) in IK units, position error mm and rotation error deg."""
    dp = tp - p
    if axis is None:
        rv = _rotvec_batch(tR @ np.swapaxes(R, -1, -2))
    else:
        cur = R @ axis
        cross = np.cross(cur, tR)  # tR holds the desired world axis here
        sn = np.linalg.norm(cross, axis=-1)
        cs = np.einsum("bi,bi->b", cur, tR)
        ang = np.arctan2(sn, cs)
        with np.errstate(divide="ignore", invalid="ignore"):
            rv = np.where(sn[:, None] > 1e-12, cross * (ang / sn)[:, None], 0.0)
        # antiparallel: any perpendicular axis
        flip = (sn < 1e-9) & (cs < 0)
        if np.any(flip):
            perp = np.cross(cur[flip], np.array([1.0, 0.0, 0.0]))
            bad = np.linalg.norm(perp, axis=-1) < 1e-6
            perp[bad] = np.cross(cur[flip][bad], np.array([0.0, 1.0, 0.0]))
            rv[flip] = perp / np.linalg.norm(perp, axis=-1, keepdims=True) * np.pi
    e = np.concatenate([dp * _POS_SCALE, rv], axis=-1)
    return e, np.linalg.norm(dp, axis=-1), np.rad2deg(np.linalg.norm(rv, axis=-1))


def ik_batch(
    arm: ArmModel,
    target_R,
    target_p,
    q0,
    tol=(1.0, 0.5),
    max_iter: int = 300,
    axis=None,
    lam0: float = 0.1,
):
    """Damped least squares from start configurations ``q0`` (B, n).

    ``target_R`` is (B,3,3) for full pose targets. With ``axis`` (a unit vector in
    the flange frame) only that axis is constrained and ``target_R`` holds the
    desired world direction (B,3) instead; rotation about it stays free.
    Returns (q (B,n), converged (B,), pos_err mm (B,), rot_err deg (B,)).
    """
    q = np.array(np.atleast_2d(q0), dtype=float)
    B = q.shape[0]
    tR = np.broadcast_to(np.asarray(target_R, float), (B, 3) if axis is not None else (B, 3, 3))
    tp = np.broadcast_to(np.asarray(target_p, float), (B, 3))
    ax = None if axis is None else np.asarray(axis, float)
    lo, hi = arm.lower, arm.upper
    q = np.clip(q, lo, hi)
    tol_mm, tol_deg = tol

    R, p = fk_batch(arm, q)
    e, pe, re = _task_error(R, p, tR, tp, ax)
    cost = np.einsum("bi,bi->b", e, e)
    lam = np.full(B, lam0)
    done = (pe <= tol_mm) & (re <= tol_deg)
    alive = ~done
    eye6 = np.eye(6)
    checkpoint = cost.copy()
    for it in range(max_iter):
        if it and it % _STALL_WINDOW == 0:
            # drop restarts that stopped making progress
            alive &= cost < _STALL_RATIO * checkpoint
            checkpoint = cost.copy()
        idx = np.flatnonzero(alive & ~done)
        if idx.size == 0:
            break
        J, _, _ = jacobian_batch(arm, q[idx])
        J[:, :3, :] *= _POS_SCALE
        A = J @ np.swapaxes(J, -1, -2) + (lam[idx] ** 2)[:, None, None] * eye6
        y = np.linalg.solve(A, e[idx][..., None])[..., 0]
        dq = np.rad2deg(np.einsum("bji,bj->bi", J, y))
        # keep single steps bounded
        big = np.abs(dq).max(axis=-1)
        dq *= np.minimum(1.0, 30.0 / np.maximum(big, 1e-12))[:, None]
        qn = np.clip(q[idx] + dq, lo, hi)
        Rn, pn = fk_batch(arm, qn)
        en, pen, ren = _task_error(Rn, pn, tR[idx], tp[idx], ax)
        cn = np.einsum("bi,bi->b", en, en)
        better = cn < cost[idx]
        acc = idx[better]
        q[acc] = qn[better]
        e[acc] = en[better]
        cost[acc] = cn[better]
        pe[acc] = pen[better]
        re[acc] = ren[better]
        lam[acc] = np.maximum(lam[acc] * 0.5, 1e-5)
        rej = idx[~better]
        lam[rej] = lam[rej] * 4.0
        alive[rej[lam[rej] > 1e3]] = False
        done[acc] = (pe[acc] <= tol_mm) & (re[acc] <= tol_deg)
    return q, done, pe, re


def dedupe(solutions, threshold_deg: float = 2.0) -> list:
    out = []
    for s in solutions:
        if all(np.max(np.abs(s - o)) >= threshold_deg for o in out):
            out.append(s)
    return out


def solve_ik(
    arm: ArmModel,
    target: Pose,
    seeds: int = 20,
    tolerance=(1.0, 0.5),
    rng=0,
    q_init=None,
    axis=None,
    max_iter: int = 300,
) -> list:
    """IK solutions for ``target`` found from ``seeds`` restarts.

    ``rng`` is a seed or a ``numpy.random.Generator``. ``q_init`` rows are used
    as the first restarts. With ``axis`` (flange frame) only the direction
    ``target.rotation @ axis`` is enforced; roll about it is free. Solutions are re-verified by forward kinematics,
    de-duplicated at 2 degrees and returned in restart order. An empty list
    means nothing was found.
    """
    tol_mm, tol_deg = tolerance
    if tol_mm <= 0 or tol_deg <= 0:
        raise ValueError("IK tolerances must be positive")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    starts = []
    if q_init is not None:
        starts = list(np.atleast_2d(np.asarray(q_init, float)))[:seeds]
    n_rand = seeds - len(starts)
    if n_rand > 0:
        starts.extend(arm.random_q(gen, n_rand, shrink=0.02))
    q0 = np.array(starts)
    tR = target.rotation if axis is None else target.rotation @ np.asarray(axis, float)
    q, ok, _, _ = ik_batch(arm, tR, target.translation, q0, tolerance, max_iter, axis=axis)
    sols = [qi for qi, good in zip(q, ok) if good]
    sols = [s for s in sols if _verify(arm, s, target, tolerance, axis)]
    return dedupe(sols)


def _verify(arm, q, target: Pose, tolerance, axis) -> bool:
    if not arm.within_limits(q):
        return False
    R, p = fk_batch(arm, q[None])
    if np.linalg.norm(p[0] - target.translation) > tolerance[0]:
        return False
    if axis is None:
        c = (np.trace(target.rotation.T @ R[0]) - 1.0) / 2.0
    else:
        ax = np.asarray(axis, float)
        c = float(np.dot(R[0] @ ax, target.rotation @ ax))
    ang = np.rad2deg(np.arccos(np.clip(c, -1.0, 1.0)))
    return bool(ang <= tolerance[1])


# ---------------------------------------------------------------------------
# default robot


LINK_LENGTHS = (300.0, 250.0, 250.0, 100.0, 100.0, 80.0)
LINK_RADII = (50.0, 45.0, 40.0, 35.0, 35.0, 30.0)
DEFAULT_HOME = (0.0, 20.0, 130.0, 0.0, 30.0, 0.0)


def make_arm(
    name: str,
    mount,
    mirrored: bool = False,
    lengths=LINK_LENGTHS,
    radii=LINK_RADII,
    limits=None,
    home=DEFAULT_HOME,
) -> ArmModel:
    """Six-axis arm whose chain is straight along the mount z axis at q = 0.

    Axes: yaw, shoulder pitch, elbow pitch, wrist roll, wrist pitch, flange roll.
    The last length is the flange (TCP) offset. A mirrored arm flips the roll
    axes so the same joint vector gives the y-mirrored pose.
    """
    sgn = -1.0 if mirrored else 1.0
    axes = [(0, 0, sgn), (0, 1, 0), (0, 1, 0), (0, 0, sgn), (0, 1, 0), (0, 0, sgn)]
    trans = [0.0, *lengths[:5]]
    joints = [Joint(a, (0.0, 0.0, t)) for a, t in zip(axes, trans)]
    if limits is None:
        limits = [(-170.0, 170.0)] * 6
        limits[2] = (0.0, 150.0)
    caps = []
    for i in range(6):
        length = lengths[i] if i < 5 else lengths[5] * 0.75
        caps.append(Capsule(Segment((0, 0, 0), (0, 0, length)), radii[i]))
    mount_pose = mount if isinstance(mount, Pose) else Pose.from_translation(mount)
    return ArmModel(
        name=name,
        joints=joints,
        limits=limits,
        base=mount_pose,
        flange=Pose.from_translation(0.0, 0.0, lengths[5]),
        link_capsules=caps,
        home=home,
    )


def default_robot() -> dict:
    """Dual-arm robot with mirrored arms mounted at (0, -+150, 1000) mm."""
    return {
        "right": make_arm("right", (0.0, -150.0, 1000.0)),
        "left": make_arm("left", (0.0, 150.0, 1000.0), mirrored=True),
    }
