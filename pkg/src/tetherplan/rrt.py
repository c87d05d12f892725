"""Joint-space RRT-connect with shortcut smoothing and dense interpolation."""
from __future__ import annotations

import time

import numpy as np


class PlanningError(RuntimeError):
    """Planner failure. ``kind`` is a short machine-readable tag such as
    "no grasp", "no path", "no slider grasp" or "replan OMMS"."""

    def __init__(self, kind: str, detail: str = "", diagnostics=None):
        super().__init__(f"{kind}: {detail}" if detail else kind)
        self.kind = kind
        self.detail = detail
        self.diagnostics = diagnostics or {}


def interpolate(path, max_step: float = 5.0) -> list:
    """Insert configurations so that no joint moves more than ``max_step`` between neighbours.

    Endpoints and all original waypoints are kept exactly.
    """
    if len(path) == 0:
        raise ValueError("path must not be empty")
    pts = [np.asarray(p, float) for p in path]
    out = [pts[0].copy()]
    for a, b in zip(pts[:-1], pts[1:]):
        n = int(np.ceil(np.max(np.abs(b - a)) / max_step - 1e-9)) if np.any(a != b) else 0
        for k in range(1, n):
            out.append(a + (b - a) * (k / n))
        if n > 0:
            out.append(b.copy())
    return out


def _segment(a, b, step):
    """Configurations strictly after ``a`` up to and including ``b`` at ``step`` spacing."""
    n = max(1, int(np.ceil(np.max(np.abs(b - a)) / step - 1e-9)))
    t = np.arange(1, n + 1)[:, None] / n
    return a + (b - a) * t


class _Tree:
    def __init__(self, root):
        self.nodes = np.array([root], float)
        self.parent = [-1]

    def add(self, q, parent):
        self.nodes = np.vstack([self.nodes, q])
        self.parent.append(parent)
        return len(self.parent) - 1

    def nearest(self, q):
        d = np.sum((self.nodes - q) ** 2, axis=1)
        return int(np.argmin(d))

    def path_to_root(self, i):
        out = []
        while i >= 0:
            out.append(self.nodes[i])
            i = self.parent[i]
        return out


def rrt_connect(
    free,
    start,
    goal,
    lower,
    upper,
    rng: np.random.Generator,
    step: float = 5.0,
    goal_bias: float = 0.1,
    max_iter: int = 4000,
    timeout: float = 30.0,
):
    """Bidirectional RRT. ``free`` maps (B, n) configurations to a (B,) bool mask.

    Returns the waypoint list from ``start`` to ``goal`` or None.
    """
    start = np.asarray(start, float)
    goal = np.asarray(goal, float)
    if not free(np.array([start, goal])).all():
        return None
    line = _segment(start, goal, step)
    if free(line).all():
        return [start, goal]

    ta, tb = _Tree(start), _Tree(goal)
    t0 = time.monotonic()
    for it in range(max_iter):
        if time.monotonic() - t0 > timeout:
            break
        if rng.random() < goal_bias:
            target = tb.nodes[0]
        else:
            target = rng.uniform(lower, upper)
        i = ta.nearest(target)
        q_near = ta.nodes[i]
        d = target - q_near
        big = np.max(np.abs(d))
        if big < 1e-9:
            continue
        q_new = q_near + d * min(1.0, step / big)
        if not free(q_new[None])[0]:
            ta, tb = tb, ta
            continue
        ia = ta.add(q_new, i)
        # greedy connect of the other tree towards q_new
        j = tb.nearest(q_new)
        seg = _segment(tb.nodes[j], q_new, step)
        ok = free(seg)
        n_ok = len(ok) if ok.all() else int(np.argmin(ok))
        last = j
        for k in range(n_ok):
            last = tb.add(seg[k], last)
        if n_ok == len(seg):
            pa = ta.path_to_root(ia)[::-1]
            pb = tb.path_to_root(tb.parent[last])
            path = pa + pb
            if not np.allclose(path[0], start):
                path = path[::-1]
            return path
        ta, tb = tb, ta
    return None


def shortcut(path, free, rng: np.random.Generator, iterations: int = 200, step: float = 5.0) -> list:
    """Random shortcutting on a waypoint path; endpoints are preserved."""
    pts = [np.asarray(p, float) for p in path]
    for _ in range(iterations):
        if len(pts) < 3:
            break
        i, j = sorted(rng.choice(len(pts), size=2, replace=False))
        if j - i < 2:
            continue
        if free(_segment(pts[i], pts[j], step)).all():
            pts = pts[: i + 1] + pts[j:]
    return pts


def plan_path(free, start, goal, lower, upper, rng, step=5.0, goal_bias=0.1, smooth_iters=200, max_iter=4000, timeout=30.0, out_step=None):
    """RRT-connect, shortcut, then interpolate to ``out_step`` (default ``step``).

    Raises PlanningError("no path") on failure.
    """
    raw = rrt_connect(free, start, goal, lower, upper, rng, step, goal_bias, max_iter, timeout)
    if raw is None:
        raise PlanningError("no path", "RRT-connect found no connection")
    smooth = shortcut(raw, free, rng, smooth_iters, step)
    dense = interpolate(smooth, out_step or step)
    if out_step and out_step < step and not free(np.array(dense)).all():
        raise PlanningError("no path", "densified path collides")
    return dense
