"""Independent reference computations shared by unit and acceptance tests."""
import numpy as np

from tetherplan.cable import CableState
from tetherplan.geometry import Pose, rot_axis, rot_z

TOOL_LIMIT = 90.0


def wrap(deg):
    return (np.asarray(deg, float) + 180.0) % 360.0 - 180.0


def sweep_oracle(measured_signed, beta):
    """Brute-force signed sweep.

    The cable direction is followed through every step by the shortest
    rotation between consecutive measurements, giving the total signed sweep
    from the reference line. Bending past beta (counter-clockwise) or past
    90 degrees (clockwise) is the accumulation.
    """
    s = np.asarray(measured_signed, float)
    sweep = np.empty_like(s)
    sweep[0] = s[0]
    for i in range(1, len(s)):
        sweep[i] = sweep[i - 1] + wrap(s[i] - s[i - 1])
    return np.maximum(0.0, sweep - beta), np.maximum(0.0, -TOOL_LIMIT - sweep)


def monotone_pieces(rng, n_steps=(40, 90), max_step=4.9, bound=250.0):
    """Unwrapped planar cable angle made of monotone pieces with steps below 5 degrees."""
    n = int(rng.integers(*n_steps))
    u = [float(rng.uniform(-30.0, 30.0))]
    direction = rng.choice([-1.0, 1.0])
    left = int(rng.integers(3, 25))
    while len(u) < n:
        if left == 0:
            direction = -direction
            left = int(rng.integers(3, 25))
        nxt = u[-1] + direction * rng.uniform(0.05, max_step)
        if abs(nxt) > bound:
            direction = -direction
            left = int(rng.integers(3, 25))
            continue
        u.append(nxt)
        left -= 1
    return np.array(u)


def cable_states(u, rng):
    """Cable states whose first section sits at planar angle ``u`` from the reference direction,
    seen from a random tool pose, with a random out-of-plane tilt."""
    R0 = rot_axis(rng.normal(size=3), rng.uniform(-180, 180))
    tail = rng.uniform(-200, 200, 3)
    tool = Pose(R0, tail - R0 @ np.array([-90.0, 0.0, 0.0]))
    out = []
    for a in u:
        elev = rng.uniform(-30.0, 30.0)
        c = rot_z(a) @ np.array([-np.cos(np.deg2rad(elev)), 0.0, np.sin(np.deg2rad(elev))])
        out.append(CableState(tail, tail + 600.0 * (R0 @ c), tool))
    return out


def dense(a, b, n):
    """``n`` evenly spaced points from a to b."""
    t = np.linspace(0.0, 1.0, n)[:, None]
    return a + (b - a) * t


def point_segment(p, a, b):
    d = b - a
    L = d @ d
    t = np.clip(((p - a) @ d) / L, 0.0, 1.0) if L > 0 else np.zeros(len(p))
    return np.linalg.norm(p - (a + t[:, None] * d), axis=1)


def point_aabb(p, half):
    return np.linalg.norm(np.maximum(np.abs(p) - half, 0.0), axis=1)


def random_pose(rng):
    return Pose(rot_axis(rng.normal(size=3), rng.uniform(-180, 180)), rng.uniform(-300, 300, 3))


def chain_oracle(arm, q):
    """Plain 4x4 product: base * prod(T(trans_i) R(axis_i, q_i)) * flange."""
    from scipy.spatial.transform import Rotation

    T = arm.base.matrix()
    for j, qi in zip(arm.joints, q):
        step = np.eye(4)
        step[:3, 3] = j.translation
        rot = np.eye(4)
        rot[:3, :3] = Rotation.from_rotvec(np.deg2rad(qi) * j.axis).as_matrix()
        T = T @ step @ rot
    return T @ arm.flange.matrix()


def distance_errors(n_cases=1000, seed=2024, samples=2000):
    """Largest deviation of segment/capsule/box distances from dense sampling."""
    from tetherplan.geometry import Box, Segment, segment_box_distance, segment_capsule_distance, segment_segment_distance

    rng = np.random.default_rng(seed)
    worst = {"segment": 0.0, "capsule": 0.0, "box": 0.0, "witness": 0.0}
    for _ in range(n_cases):
        a1, b1, a2, b2 = rng.uniform(-200, 200, (4, 3))
        s1, s2 = Segment(a1, b1), Segment(a2, b2)
        d, (c1, c2) = segment_segment_distance(s1, s2)
        ref = point_segment(dense(a1, b1, samples), a2, b2).min()
        worst["segment"] = max(worst["segment"], abs(d - ref))
        worst["witness"] = max(worst["witness"], abs(np.linalg.norm(c1 - c2) - d))
        r = rng.uniform(1, 60)
        worst["capsule"] = max(worst["capsule"], abs(segment_capsule_distance(s1, s2, r) - (ref - r)))
        pose = random_pose(rng)
        half = rng.uniform(5, 120, 3)
        db = segment_box_distance(s1, Box(pose, tuple(half)))
        local = pose.inverse().apply(dense(a1, b1, samples))
        worst["box"] = max(worst["box"], abs(db - point_aabb(local, half).min()))
    return worst
