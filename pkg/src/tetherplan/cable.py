"""Straight-line cable geometry and the cable angle-accumulation metric.

The cable leaves the tool at its tail point and runs straight to the slider
(when one is held) and on to the anchor (balancer or table fixture). Bending
is measured in the tool frame: the first cable section is projected onto the
tool's bending plane and compared with the unbent reference direction.

Accumulation bookkeeping works on the signed planar angle, counter-clockwise
positive about the plane normal. Quadrants are numbered counter-clockwise from
the reference direction: 1 and 2 are the counter-clockwise half, 3 and 4 the
clockwise half. ``acc_ee`` grows once the cable bends past the grasp angle
beta on the counter-clockwise side, ``acc_tool`` once it bends past 90 degrees
on the clockwise side. Both keep integrating through quadrant changes (the
sign memory of the quadrant term) until they unwind back to zero.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .geometry import Pose, Segment

REFERENCE_DIR = np.array([-1.0, 0.0, 0.0])
PLANE_NORMAL = np.array([0.0, 0.0, 1.0])
TOOL_THRESHOLD = 90.0
_INDETERMINATE_DEG = 1.0


@dataclass(frozen=True)
class CableState:
    tool_tail: np.ndarray
    anchor: np.ndarray
    tool_frame: Pose
    slider: Optional[np.ndarray] = None
    reference_dir: np.ndarray = REFERENCE_DIR
    plane_normal: np.ndarray = PLANE_NORMAL

    def __post_init__(self):
        for name in ("tool_tail", "anchor", "reference_dir", "plane_normal"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).reshape(3))
        if self.slider is not None:
            object.__setattr__(self, "slider", np.array(self.slider, dtype=float).reshape(3))
        pts = self.points()
        lengths = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(lengths <= 1.0):
            raise ValueError(f"cable sections must be longer than 1 mm, got {lengths}")

    def points(self) -> np.ndarray:
        if self.slider is None:
            return np.array([self.tool_tail, self.anchor])
        return np.array([self.tool_tail, self.slider, self.anchor])


def cable_segments(state: CableState) -> list:
    """One segment tail->anchor, or two segments tail->slider->anchor."""
    pts = state.points()
    return [Segment(pts[i], pts[i + 1]) for i in range(len(pts) - 1)]


class Bend(NamedTuple):
    angle: float  # unsigned, [0, 180]
    quadrant: int
    signed: float  # (-180, 180], counter-clockwise positive
    indeterminate: bool = False


def quadrant_of(signed_deg: float) -> int:
    if 0.0 <= signed_deg < 90.0:
        return 1
    if signed_deg >= 90.0:
        return 2
    if signed_deg < -90.0:
        return 3
    return 4


def eta(quadrant: int) -> float:
    """Quadrant sign memory: +1 on the counter-clockwise half, -1 on the clockwise half."""
    return 1.0 if quadrant in (1, 2) else -1.0


def bending_angle(state: CableState) -> Bend:
    """Planar bending of the first cable section relative to the reference direction."""
    first = state.slider if state.slider is not None else state.anchor
    world = first - state.tool_tail
    c = state.tool_frame.rotation.T @ (world / np.linalg.norm(world))
    n = state.plane_normal / np.linalg.norm(state.plane_normal)
    r = state.reference_dir / np.linalg.norm(state.reference_dir)
    r = r - np.dot(r, n) * n
    r = r / np.linalg.norm(r)
    along = float(np.dot(c, n))
    cp = c - along * n
    indeterminate = abs(along) > np.cos(np.deg2rad(_INDETERMINATE_DEG))
    signed = float(np.rad2deg(np.arctan2(np.dot(np.cross(r, cp), n), np.dot(r, cp))))
    if signed <= -180.0:
        signed = 180.0
    return Bend(abs(signed), quadrant_of(signed), signed, bool(indeterminate))


def bending_angles(states) -> list:
    """Vectorised bending_angle over a sequence of cable states."""
    states = list(states)
    if not states:
        return []
    first = np.array([s.slider if s.slider is not None else s.anchor for s in states], dtype=float)
    tail = np.array([s.tool_tail for s in states], dtype=float)
    rot = np.array([s.tool_frame.rotation for s in states])
    world = first - tail
    world /= np.linalg.norm(world, axis=1, keepdims=True)
    c = np.einsum("nji,nj->ni", rot, world)
    n = np.array([s.plane_normal for s in states], dtype=float)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    r = np.array([s.reference_dir for s in states], dtype=float)
    r /= np.linalg.norm(r, axis=1, keepdims=True)
    r -= np.sum(r * n, axis=1, keepdims=True) * n
    r /= np.linalg.norm(r, axis=1, keepdims=True)
    along = np.sum(c * n, axis=1)
    cp = c - along[:, None] * n
    indeterminate = np.abs(along) > np.cos(np.deg2rad(_INDETERMINATE_DEG))
    signed = np.rad2deg(np.arctan2(np.sum(np.cross(r, cp) * n, axis=1), np.sum(r * cp, axis=1)))
    signed[signed <= -180.0] = 180.0
    return [Bend(abs(a), quadrant_of(a), a, bool(i)) for a, i in zip(signed.tolist(), indeterminate.tolist())]


@dataclass(frozen=True)
class AccumulationTracker:
    beta: float = 60.0
    acc_ee: float = 0.0
    acc_tool: float = 0.0
    prev_angle: Optional[float] = None
    prev_quadrant: int = 1
    engaged_ee: bool = False
    engaged_tool: bool = False

    @property
    def prev_signed(self) -> float:
        if self.prev_angle is None:
            return 0.0
        return self.prev_angle * eta(self.prev_quadrant)


def signed_step(prev_angle: float, prev_q: int, angle: float, q: int) -> float:
    """Signed rotation between two adjacent cable states.

    Within one half-plane this is eta * (angle - prev_angle). When the step
    crosses the 180 degree line (quadrants 2/3) or the reference line
    (quadrants 1/4), each side of the crossing is weighted by its own eta.
    """
    if eta(prev_q) == eta(q):
        return eta(q) * (angle - prev_angle)
    pair = {prev_q, q}
    if pair == {2, 3}:
        edge = 180.0
    elif pair == {1, 4}:
        edge = 0.0
    else:
        # diagonal quadrant jump: step larger than the planner allows, take the short way
        d = eta(q) * angle - eta(prev_q) * prev_angle
        return float((d + 180.0) % 360.0 - 180.0)
    return eta(prev_q) * (edge - prev_angle) + eta(q) * (angle - edge)


def update_accumulation(tracker: AccumulationTracker, state: CableState) -> AccumulationTracker:
    return advance(tracker, bending_angle(state))


def advance(tracker: AccumulationTracker, bend: Bend) -> AccumulationTracker:
    """Fold one bending measurement into the tracker."""
    if bend.indeterminate:
        return replace(tracker, prev_angle=bend.angle) if tracker.prev_angle is not None else tracker

    if tracker.prev_angle is None:
        start = 0.0
        delta = bend.signed
    else:
        start = tracker.prev_signed
        delta = signed_step(tracker.prev_angle, tracker.prev_quadrant, bend.angle, bend.quadrant)
    end = start + delta
    beta = tracker.beta

    acc_ee, engaged_ee = tracker.acc_ee, tracker.engaged_ee
    if engaged_ee:
        acc_ee += delta
        if acc_ee <= 0.0:
            acc_ee, engaged_ee = 0.0, False
    elif start < beta <= end:
        acc_ee, engaged_ee = end - beta, True

    acc_tool, engaged_tool = tracker.acc_tool, tracker.engaged_tool
    if engaged_tool:
        acc_tool -= delta
        if acc_tool <= 0.0:
            acc_tool, engaged_tool = 0.0, False
    elif start > -TOOL_THRESHOLD >= end:
        acc_tool, engaged_tool = -TOOL_THRESHOLD - end, True

    return AccumulationTracker(
        beta=beta,
        acc_ee=acc_ee,
        acc_tool=acc_tool,
        prev_angle=bend.angle,
        prev_quadrant=bend.quadrant,
        engaged_ee=engaged_ee,
        engaged_tool=engaged_tool,
    )


def replay(states, beta: float = 60.0):
    """Run a fresh tracker over cable states; returns (acc_ee, acc_tool) arrays."""
    tr = AccumulationTracker(beta=beta)
    ee, tool = [], []
    for bend in bending_angles(states):
        tr = advance(tr, bend)
        ee.append(tr.acc_ee)
        tool.append(tr.acc_tool)
    return np.array(ee), np.array(tool)
