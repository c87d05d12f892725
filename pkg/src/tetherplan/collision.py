"""Scene collision and clearance queries.

Robot links are capsules, held objects are covered by capsules, obstacles and
the table are oriented boxes, the cable is a polyline of segments.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import Box, segment_box_distance_local, segment_segment_distance_batch
from .kinematics import ArmModel, fk_batch, link_capsules_batch

DEFAULT_MARGIN = 5.0


@dataclass(frozen=True)
class SceneObstacles:
    boxes: tuple = ()
    table: Box | None = None
    margin: float = DEFAULT_MARGIN

    def all_boxes(self) -> list:
        out = [("table", self.table)] if self.table is not None else []
        out.extend((f"box{i}", b) for i, b in enumerate(self.boxes))
        return out

    def with_boxes(self, boxes) -> "SceneObstacles":
        return SceneObstacles(tuple(boxes), self.table, self.margin)


@dataclass
class HeldObject:
    """An object rigidly held by arm ``holder`` (index into the arm list)."""

    name: str
    capsules: list  # [(a, b, radius)] in world
    holder: int | None = None


class CollisionReport(NamedTuple):
    free: bool
    pair: tuple | None = None
    clearance: float = np.inf


def _seg_seg_clearance(a1, b1, r1, a2, b2, r2):
    d, _, _ = segment_segment_distance_batch(a1, b1, a2, b2)
    return d - r1 - r2


def _seg_box_clearance(a, b, r, box: Box):
    inv = box.pose.inverse()
    return segment_box_distance_local(inv.apply(a), inv.apply(b), box.half_extents) - r


def _arm_capsules(arm: ArmModel, q):
    a, b, r = link_capsules_batch(arm, np.asarray(q, float)[None])
    return a[0], b[0], r


def robot_collision_free(arms, held=(), obstacles: SceneObstacles = SceneObstacles(), margin=None) -> CollisionReport:
    """Check both arms, held objects and obstacles for clearance above the margin.

    ``arms`` is a sequence of (ArmModel, q). Adjacent links of one arm are
    exempt, as is a held object against the hand holding it.
    """
    checker = CollisionChecker([arm for arm, _ in arms], obstacles, margin)
    return checker.check([q for _, q in arms], held)


class CollisionChecker:
    """Reusable pair lists for repeated robot collision queries."""

    def __init__(self, arms, obstacles: SceneObstacles = SceneObstacles(), margin=None):
        self.arms = list(arms)
        self.obstacles = obstacles
        self.margin = obstacles.margin if margin is None else margin
        self.boxes = obstacles.all_boxes()
        self._pair_cache = {}

    def _collect(self, qs, held):
        segs_a, segs_b, radii, owner, names = [], [], [], [], []
        for k, (arm, q) in enumerate(zip(self.arms, qs)):
            a, b, r = _arm_capsules(arm, q)
            for i in range(len(r)):
                segs_a.append(a[i])
                segs_b.append(b[i])
                radii.append(r[i])
                owner.append((k, i))
                names.append(f"{arm.name}.link{i + 1}")
        for obj in held:
            for ca, cb, cr in obj.capsules:
                segs_a.append(ca)
                segs_b.append(cb)
                radii.append(cr)
                owner.append(("held", obj.holder, obj.name))
                names.append(obj.name)
        return np.array(segs_a), np.array(segs_b), np.array(radii), owner, names

    def _pairs(self, owner):
        pairs = []
        n_last = {k: len(arm.link_capsules) - 1 for k, arm in enumerate(self.arms)}
        for i in range(len(owner)):
            for j in range(i + 1, len(owner)):
                oi, oj = owner[i], owner[j]
                if oi[0] == "held" and oj[0] == "held":
                    if oi[2] == oj[2]:
                        continue
                    pairs.append((i, j))
                    continue
                if oi[0] == "held" or oj[0] == "held":
                    h, link = (oi, oj) if oi[0] == "held" else (oj, oi)
                    if h[1] == link[0] and link[1] == n_last[link[0]]:
                        continue
                    pairs.append((i, j))
                    continue
                if oi[0] == oj[0] and abs(oi[1] - oj[1]) < 2:
                    continue
                pairs.append((i, j))
        return np.array(pairs, dtype=int).reshape(-1, 2)

    def check(self, qs, held=()) -> CollisionReport:
        a, b, r, owner, names = self._collect(qs, held)
        key = tuple(owner)
        pairs = self._pair_cache.get(key)
        if pairs is None:
            pairs = self._pair_cache[key] = self._pairs(owner)
        worst = np.inf
        worst_pair = None
        if len(pairs):
            cl = _seg_seg_clearance(a[pairs[:, 0]], b[pairs[:, 0]], r[pairs[:, 0]], a[pairs[:, 1]], b[pairs[:, 1]], r[pairs[:, 1]])
            k = int(np.argmin(cl))
            worst, worst_pair = float(cl[k]), (names[pairs[k, 0]], names[pairs[k, 1]])
        for bname, box in self.boxes:
            cl = _seg_box_clearance(a, b, r, box)
            k = int(np.argmin(cl))
            if cl[k] < worst:
                worst, worst_pair = float(cl[k]), (names[k], bname)
        free = worst > self.margin
        return CollisionReport(free, None if free else worst_pair, worst)


def cable_clear(cable_points, arms, obstacles: SceneObstacles = SceneObstacles(), exempt=(), margin=None):
    """Clearance of the cable polyline against robot links and boxes.

    ``arms`` is a sequence of (ArmModel, q); ``exempt`` holds (arm index, link
    index) pairs that are ignored (the hands touching tool and slider).
    Returns (clear, min clearance mm, offending name or None).
    """
    margin = obstacles.margin if margin is None else margin
    pts = np.asarray(cable_points, float)
    ca, cb = pts[:-1], pts[1:]
    worst, who = np.inf, None
    for k, (arm, q) in enumerate(arms):
        a, b, r = _arm_capsules(arm, q)
        keep = [i for i in range(len(r)) if (k, i) not in exempt]
        if not keep:
            continue
        a, b, r = a[keep], b[keep], r[keep]
        cl = _seg_seg_clearance(ca[:, None], cb[:, None], 0.0, a[None], b[None], r[None])
        idx = np.unravel_index(np.argmin(cl), cl.shape)
        if cl[idx] < worst:
            worst, who = float(cl[idx]), f"{arm.name}.link{keep[idx[1]] + 1}"
    for bname, box in obstacles.all_boxes():
        cl = _seg_box_clearance(ca, cb, 0.0, box)
        k = int(np.argmin(cl))
        if cl[k] < worst:
            worst, who = float(cl[k]), bname
    clear = worst > margin
    return clear, worst, (None if clear else who)


def cable_obstacle_clearance(cable_points, obstacles: SceneObstacles, include_table: bool = False) -> float:
    pts = np.asarray(cable_points, float)
    ca, cb = pts[:-1], pts[1:]
    worst = np.inf
    for bname, box in obstacles.all_boxes():
        if bname == "table" and not include_table:
            continue
        worst = min(worst, float(np.min(_seg_box_clearance(ca, cb, 0.0, box))))
    return worst


class MovingArmChecker:
    """Clearance of one moving arm (plus objects in its hand) against a frozen rest of the scene.

    ``held_local`` capsules are given in the flange frame and move with the arm.
    ``static`` capsules (other arm links, objects held by the other arm) do not
    move; pairs among static parts are not checked here. ``skip_static`` lists
    static capsule indices the held objects may touch (a second hand on the same
    tool during a handover).
    """

    def __init__(self, arm: ArmModel, obstacles: SceneObstacles, static=(), held_local=(), skip_static=(), margin=None):
        self.arm = arm
        self.margin = obstacles.margin if margin is None else margin
        self.boxes = [b for _, b in obstacles.all_boxes()]
        self.box_names = [n for n, _ in obstacles.all_boxes()]
        L = len(arm.link_capsules)
        self.L = L
        self.held_a = np.array([h[0] for h in held_local], float).reshape(-1, 3)
        self.held_b = np.array([h[1] for h in held_local], float).reshape(-1, 3)
        self.held_r = np.array([h[2] for h in held_local], float)
        H = len(self.held_r)
        self.static_a = np.array([s[0] for s in static], float).reshape(-1, 3)
        self.static_b = np.array([s[1] for s in static], float).reshape(-1, 3)
        self.static_r = np.array([s[2] for s in static], float)
        S = len(self.static_r)
        self.static_names = [s[3] if len(s) > 3 else f"static{i}" for i, s in enumerate(static)]
        moving_names = [f"{arm.name}.link{i + 1}" for i in range(L)] + [f"{arm.name}.held{j}" for j in range(H)]
        pairs_mm = []
        for i in range(L):
            for j in range(i + 2, L):
                pairs_mm.append((i, j))
        for h in range(H):
            for i in range(L - 1):
                pairs_mm.append((i, L + h))
        self.pairs_mm = np.array(pairs_mm, dtype=int).reshape(-1, 2)
        pairs_ms = []
        for m in range(L + H):
            for s_ in range(S):
                if m >= L and s_ in skip_static:
                    continue
                pairs_ms.append((m, s_))
        self.pairs_ms = np.array(pairs_ms, dtype=int).reshape(-1, 2)
        self.names_m = moving_names
        inv = [b.pose.inverse() for b in self.boxes]
        self._box_inv_R = np.array([iv.rotation for iv in inv]).reshape(-1, 3, 3)
        self._box_inv_t = np.array([iv.translation for iv in inv]).reshape(-1, 3)
        self._box_half = np.array([b.half_extents for b in self.boxes]).reshape(-1, 3)

    def moving_capsules(self, qs):
        qs = np.atleast_2d(np.asarray(qs, float))
        a, b, r = link_capsules_batch(self.arm, qs)
        if len(self.held_r):
            R, p = fk_batch(self.arm, qs)
            ha = np.einsum("bij,hj->bhi", R, self.held_a) + p[:, None]
            hb = np.einsum("bij,hj->bhi", R, self.held_b) + p[:, None]
            a = np.concatenate([a, ha], axis=1)
            b = np.concatenate([b, hb], axis=1)
            r = np.concatenate([r, self.held_r])
        return a, b, r

    def clearance(self, qs):
        """Minimum clearance per configuration (B,) and the index of the worst pair kind."""
        a, b, r = self.moving_capsules(qs)
        B = a.shape[0]
        parts = []
        if len(self.pairs_mm):
            i, j = self.pairs_mm[:, 0], self.pairs_mm[:, 1]
            parts.append(_seg_seg_clearance(a[:, i], b[:, i], r[i], a[:, j], b[:, j], r[j]))
        if len(self.pairs_ms):
            m, s_ = self.pairs_ms[:, 0], self.pairs_ms[:, 1]
            parts.append(_seg_seg_clearance(a[:, m], b[:, m], r[m], self.static_a[s_], self.static_b[s_], self.static_r[s_]))
        if len(self.boxes):
            la = np.einsum("kij,bmj->bkmi", self._box_inv_R, a) + self._box_inv_t[None, :, None]
            lb = np.einsum("kij,bmj->bkmi", self._box_inv_R, b) + self._box_inv_t[None, :, None]
            d = segment_box_distance_local(la, lb, self._box_half[None, :, None, :])
            parts.append((d - r[None, None, :]).reshape(B, -1))
        if not parts:
            return np.full(B, np.inf)
        return np.concatenate(parts, axis=1).min(axis=1)

    def free(self, qs):
        return self.clearance(qs) > self.margin

    def explain(self, q):
        """Name of the worst pair for a single configuration."""
        a, b, r = self.moving_capsules(q)
        best, who = np.inf, None
        for i, j in self.pairs_mm:
            c = float(_seg_seg_clearance(a[0, i], b[0, i], r[i], a[0, j], b[0, j], r[j]))
            if c < best:
                best, who = c, (self.names_m[i], self.names_m[j])
        for m, s_ in self.pairs_ms:
            c = float(_seg_seg_clearance(a[0, m], b[0, m], r[m], self.static_a[s_], self.static_b[s_], self.static_r[s_]))
            if c < best:
                best, who = c, (self.names_m[m], self.static_names[s_])
        for k, box in enumerate(self.boxes):
            cl = _seg_box_clearance(a[0], b[0], r, box)
            m = int(np.argmin(cl))
            if cl[m] < best:
                best, who = float(cl[m]), (self.names_m[m], self.box_names[k])
        return best, who


def arm_static_capsules(arm: ArmModel, q, tag=None):
    """Capsules of a frozen arm as (a, b, r, name) tuples."""
    a, b, r = _arm_capsules(arm, q)
    return [(a[i], b[i], float(r[i]), f"{tag or arm.name}.link{i + 1}") for i in range(len(r))]
