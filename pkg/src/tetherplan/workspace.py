"""Reachability grids, dual-arm region, balancer column ranking, grasp-based
manipulability field and manipulability spheres."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .collision import MovingArmChecker, SceneObstacles
from .kinematics import ArmModel, ik_batch, manipulability_batch

DEFAULT_BOUNDS = ((100.0, 800.0), (-600.0, 600.0), (700.0, 1900.0))

# (flange x, flange z) pairs; z runs along +x, -x, +y, -y, +z, -z
_CANONICAL = [
    ((0, 0, 1), (1, 0, 0)),
    ((0, 0, 1), (-1, 0, 0)),
    ((1, 0, 0), (0, 1, 0)),
    ((1, 0, 0), (0, -1, 0)),
    ((1, 0, 0), (0, 0, 1)),
    ((1, 0, 0), (0, 0, -1)),
]


def canonical_orientations() -> list:
    """Rotation matrices whose z column points along +-x, +-y, +-z."""
    out = []
    for x, z in _CANONICAL:
        x = np.array(x, float)
        z = np.array(z, float)
        out.append(np.column_stack([x, np.cross(z, x), z]))
    return out


@dataclass
class ReachGrid:
    origin: np.ndarray
    spacing: float
    dims: tuple
    reach_right: np.ndarray
    reach_left: np.ndarray
    M: np.ndarray = None
    G: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("grid spacing must be positive")
        if self.M is None:
            self.M = np.zeros(self.dims)
        if self.G is None:
            self.G = np.zeros(self.dims, dtype=int)

    @property
    def omega(self) -> np.ndarray:
        return self.reach_right & self.reach_left

    def axes(self):
        return [self.origin[k] + self.spacing * np.arange(self.dims[k]) for k in range(3)]

    def points(self) -> np.ndarray:
        xs, ys, zs = self.axes()
        X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def index_of(self, p) -> tuple:
        idx = np.rint((np.asarray(p, float) - self.origin) / self.spacing).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.dims)):
            raise ValueError(f"point {p} lies outside the grid")
        return tuple(int(i) for i in idx)

    def point_at(self, idx) -> np.ndarray:
        return self.origin + self.spacing * np.asarray(idx, float)

    def to_csv(self, path) -> None:
        pts = self.points()
        rr = self.reach_right.ravel()
        rl = self.reach_left.ravel()
        om = self.omega.ravel()
        M = self.M.ravel()
        G = self.G.ravel()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "z", "reach_r", "reach_l", "omega", "M", "G"])
            for i, p in enumerate(pts):
                w.writerow([f"{p[0]:g}", f"{p[1]:g}", f"{p[2]:g}", int(rr[i]), int(rl[i]), int(om[i]), f"{M[i]:.9g}", int(G[i])])


def grid_axes(bounds, spacing):
    return [np.arange(lo, hi + 1e-9, spacing) for lo, hi in bounds]


def reachable_points(arm: ArmModel, points, seeds: int = 3, rng=0, tol=(1.0, 0.5), chunk: int = 20000) -> np.ndarray:
    """Flag points where any canonical flange orientation has an IK solution."""
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    pts = np.asarray(points, float)
    ok = np.zeros(len(pts), dtype=bool)
    dist = np.linalg.norm(pts - arm.base.translation, axis=1)
    bound = sum(np.linalg.norm(j.translation) for j in arm.joints) + np.linalg.norm(arm.flange.translation)
    candidate = dist <= bound + 1e-9
    for R in canonical_orientations():
        todo = np.flatnonzero(candidate & ~ok)
        if todo.size == 0:
            break
        starts = arm.random_q(gen, todo.size * seeds, shrink=0.02)
        tgt = np.repeat(pts[todo], seeds, axis=0)
        found = np.zeros(tgt.shape[0], dtype=bool)
        for lo in range(0, tgt.shape[0], chunk):
            hi = lo + chunk
            _, d, _, _ = ik_batch(arm, R, tgt[lo:hi], starts[lo:hi], tol)
            found[lo:hi] = d
        ok[todo] |= found.reshape(-1, seeds).any(axis=1)
    return ok


def build_reach_grid(robot: dict, bounds=DEFAULT_BOUNDS, spacing: float = 50.0, seeds: int = 3, seed: int = 0) -> ReachGrid:
    """Reachability of every grid point for the right and left arms."""
    axes = grid_axes(bounds, spacing)
    dims = tuple(len(a) for a in axes)
    origin = np.array([a[0] for a in axes])
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    rng = np.random.default_rng(seed)
    rr = reachable_points(robot["right"], pts, seeds, rng).reshape(dims)
    rl = reachable_points(robot["left"], pts, seeds, rng).reshape(dims)
    return ReachGrid(origin, float(spacing), dims, rr, rl, meta={"seed": seed, "seeds": seeds})


def score_balancer_columns(grid: ReachGrid) -> list:
    """(x, y, count) per vertical column of dual-arm reachable points, best first.

    Ties go to larger x (farther from the body), then smaller |y|, then smaller y.
    """
    counts = grid.omega.sum(axis=2)
    xs, ys, _ = grid.axes()
    rows = [(float(xs[i]), float(ys[j]), int(counts[i, j])) for i in range(len(xs)) for j in range(len(ys))]
    rows.sort(key=lambda r: (-r[2], -r[0], abs(r[1]), r[1]))
    return rows


def manipulability_field(
    grid: ReachGrid,
    arm: ArmModel,
    grasps: list,
    orientation=None,
    obstacles: SceneObstacles = SceneObstacles(),
    static=(),
    held_local=(),
    seeds: int = 3,
    seed: int = 0,
    tol=(1.0, 0.5),
    only_reachable: bool = True,
    chunk: int = 20000,
) -> ReachGrid:
    """Fill G (feasible grasp count) and M (mean best manipulability per grasp).

    The object is placed at every grid point with the fixed ``orientation``;
    a grasp counts when some restart converges and the configuration is
    collision free. Points with no feasible grasp keep G = 0 and M = 0.
    """
    R0 = np.eye(3) if orientation is None else np.asarray(orientation, float)
    pts = grid.points()
    flag = (grid.reach_left if arm.name == "left" else grid.reach_right).ravel()
    sel = np.flatnonzero(flag) if only_reachable else np.arange(len(pts))
    n_g = len(grasps)
    gen = np.random.default_rng(seed)
    hand_R = np.array([R0 @ g.hand_pose_local.rotation for g in grasps])
    hand_t = np.array([R0 @ g.hand_pose_local.translation for g in grasps])
    # problems ordered (point, grasp, restart)
    P = sel.size
    tR = np.broadcast_to(hand_R[None, :, None], (P, n_g, seeds, 3, 3)).reshape(-1, 3, 3)
    tp = (pts[sel][:, None, None, :] + hand_t[None, :, None, :]).repeat(seeds, axis=2).reshape(-1, 3)
    starts = arm.random_q(gen, tR.shape[0], shrink=0.02)
    checker = MovingArmChecker(arm, obstacles, static=static, held_local=held_local)
    best = np.zeros(tR.shape[0])
    good = np.zeros(tR.shape[0], dtype=bool)
    for lo in range(0, tR.shape[0], chunk):
        hi = lo + chunk
        q, d, _, _ = ik_batch(arm, tR[lo:hi], tp[lo:hi], starts[lo:hi], tol)
        idx = np.flatnonzero(d)
        if idx.size:
            free = checker.free(q[idx])
            idx = idx[free]
            good[lo + idx] = True
            best[lo + idx] = manipulability_batch(arm, q[idx])
    best = best.reshape(P, n_g, seeds)
    good = good.reshape(P, n_g, seeds)
    per_grasp = np.where(good, best, -np.inf).max(axis=2)
    feasible = good.any(axis=2)
    G = feasible.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        M = np.where(G > 0, np.where(feasible, per_grasp, 0.0).sum(axis=1) / np.maximum(G, 1), 0.0)
    Gf = np.zeros(len(pts), dtype=int)
    Mf = np.zeros(len(pts))
    Gf[sel] = G
    Mf[sel] = M
    grid.G = Gf.reshape(grid.dims)
    grid.M = Mf.reshape(grid.dims)
    grid.meta["per_grasp"] = (sel, np.where(feasible, per_grasp, np.nan))
    return grid


@dataclass
class SphereReport:
    reference: np.ndarray
    radius: float
    M_ref: float
    G_ref: int
    min_M: float
    min_G: int
    n_points: int


def manipulability_sphere(grid: ReachGrid, p_ref, M_frac: float = 0.8, G_frac: float = 0.5) -> SphereReport:
    """Largest radius (multiple of the grid spacing) around the reference grid point
    inside which every point keeps M >= M_frac * M_ref and G >= G_frac * G_ref."""
    idx = grid.index_of(p_ref)
    ref = grid.point_at(idx)
    M_ref = float(grid.M[idx])
    G_ref = int(grid.G[idx])
    if G_ref <= 0:
        raise ValueError("reference point has no feasible grasps")
    pts = grid.points()
    dist = np.linalg.norm(pts - ref, axis=1)
    M = grid.M.ravel()
    G = grid.G.ravel()
    ok = (M >= M_frac * M_ref) & (G >= G_frac * G_ref)
    radius = 0.0
    k = 1
    max_r = float(dist.max())
    while k * grid.spacing <= max_r + 1e-9:
        inside = dist <= k * grid.spacing + 1e-9
        if not np.all(ok[inside]):
            break
        radius = k * grid.spacing
        k += 1
    inside = dist <= radius + 1e-9
    return SphereReport(ref, radius, M_ref, G_ref, float(M[inside].min()), int(G[inside].min()), int(inside.sum()))
