"""Benchmark, obstacle-trial and workspace-analysis protocols plus report files.

Outputs per run (file names are prefixed with the run name):

* ``<name>_report.csv``  step, phase, acc_ee, acc_tool, cable_clearance, collision
* ``<name>_summary.json`` summary statistics recomputable from the rows
* ``<name>_trace.jsonl``  one state per line (joints, poses, cable points, metrics)
* ``timing.json``        wall-clock seconds per run, kept apart so the files
  above are byte-identical for identical seeds
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cmms import plan_cmms
from .collision import arm_static_capsules, cable_clear, cable_obstacle_clearance
from .geometry import Box, Pose, pose_from_axes, rot_z
from .kinematics import fk_batch
from .omms import PREGRASP_OFFSET, MotionSequence, plan_handover, plan_omms
from .rrt import PlanningError
from .workspace import build_reach_grid, manipulability_field, manipulability_sphere, score_balancer_columns

MODES = ("omms", "omms+cmms", "handover")
ROW_FIELDS = ("step", "phase", "acc_ee", "acc_tool", "cable_clearance", "collision")


@dataclass
class RunReport:
    name: str
    rows: list
    summary: dict
    sequence: MotionSequence | None = None
    wall_time: float = 0.0

    @property
    def success(self) -> bool:
        return bool(self.summary["success"])

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "report": out / f"{self.name}_report.csv",
            "summary": out / f"{self.name}_summary.json",
            "trace": out / f"{self.name}_trace.jsonl",
        }
        with open(paths["report"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(ROW_FIELDS)
            for r in self.rows:
                w.writerow([r["step"], r["phase"], repr(r["acc_ee"]), repr(r["acc_tool"]), repr(r["cable_clearance"]), int(r["collision"])])
        paths["summary"].write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
        if self.sequence is not None:
            self.sequence.write_trace(paths["trace"])
        else:
            paths["trace"].write_text("")
        _update_timing(out / "timing.json", self.name, self.wall_time)
        return paths


def _update_timing(path: Path, name: str, seconds: float) -> None:
    data = json.loads(path.read_text()) if path.exists() else {}
    data[name] = round(seconds, 3)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def summarize(rows: list) -> dict:
    """Summary statistics from report rows (the same arithmetic a reader would redo)."""
    ee = [r["acc_ee"] for r in rows]
    tool = [r["acc_tool"] for r in rows]
    cl = [r["cable_clearance"] for r in rows]
    n = len(rows)
    return {
        "n_states": n,
        "max_acc_ee": max(ee) if n else 0.0,
        "mean_acc_ee": sum(ee) / n if n else 0.0,
        "max_acc_tool": max(tool) if n else 0.0,
        "mean_acc_tool": sum(tool) / n if n else 0.0,
        "collision_count": sum(int(r["collision"]) for r in rows),
        "min_cable_clearance": min(cl) if n else None,
    }


def _hand_near(arm, q, target: Pose, reach: float) -> bool:
    """Hand inside the final approach to (or holding) an object at ``target``."""
    _, tcp = fk_batch(arm, np.asarray(q)[None])
    return bool(np.linalg.norm(tcp[0] - target.translation) <= PREGRASP_OFFSET + reach)


def report_rows(scene, seq: MotionSequence) -> list:
    """Per-state metrics; cable clearance excludes the hands touching the cable."""
    rows = []
    tool_arm, cable_arm = scene.arm("tool"), scene.arm("cable")
    last = len(tool_arm.link_capsules) - 1
    slider_reach = float(max(np.linalg.norm(p.half_extents) for p in scene.slider.parts))
    tool_reach = float(max(np.linalg.norm(p.half_extents) for p in scene.tool.parts))
    # in the handover baseline either hand may hold the tool
    handover = seq.meta.get("mode") == "handover"
    for s in seq.states:
        arms = [(tool_arm, s.q_tool_arm), (cable_arm, s.q_cable_arm)]
        exempt = {(0, last)}
        if s.slider_grasped:
            exempt.add((1, last))
        elif s.slider_pose is not None and _hand_near(cable_arm, s.q_cable_arm, s.slider_pose, slider_reach):
            exempt.add((1, last))
        elif handover and _hand_near(cable_arm, s.q_cable_arm, s.tool_pose, tool_reach):
            exempt.add((1, last))
        clear, cl, _ = cable_clear(s.cable.points(), arms, scene.obstacles, exempt=exempt)
        rows.append({
            "step": s.step,
            "phase": s.phase,
            "acc_ee": float(s.acc_ee),
            "acc_tool": float(s.acc_tool),
            "cable_clearance": float(cl),
            "collision": not clear,
        })
    return rows


def plan_with_replans(scene, start: Pose, goals: list, seed: int, max_replans: int | None = None):
    """OMMS followed by CMMS; on "replan OMMS" the tool sequence is recomputed
    with a new seed and the next tool grasp in rank order."""
    n = int(scene.planner["max_replans"]) if max_replans is None else max_replans
    errors = []
    for r in range(n + 1):
        s = seed + 7919 * r
        try:
            omms = plan_omms(scene, start, goals, seed=s, grasp_rank=r)
            seq = plan_cmms(omms, scene, seed=s)
        except PlanningError as exc:
            errors.append(str(exc))
            if exc.kind == "no grasp":
                break
            continue
        seq.meta["replans"] = r
        return seq, errors
    raise PlanningError("replan OMMS" if errors else "no path", f"failed after {len(errors)} attempt(s)", {"errors": errors})


def _plan(scene, mode: str, start: Pose, goals: list, seed: int):
    if mode == "omms":
        return plan_omms(scene, start, goals, seed=seed), []
    if mode == "omms+cmms":
        return plan_with_replans(scene, start, goals, seed)
    if mode == "handover":
        return plan_handover(scene, start, goals, seed=seed), []
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def run_task(scene, goal_ids: list, mode: str, seed: int, name: str, start: Pose | None = None) -> RunReport:
    start = scene.start if start is None else start
    goals = [scene.goals[i] for i in goal_ids]
    t0 = time.perf_counter()
    base = {"name": name, "mode": mode, "seed": int(seed), "goals": [int(g) for g in goal_ids], "anchor": scene.anchor_mode}
    try:
        seq, errors = _plan(scene, mode, start, goals, seed)
    except PlanningError as exc:
        summary = dict(base, success=False, error=str(exc), **summarize([]))
        return RunReport(name, [], summary, None, time.perf_counter() - t0)
    rows = report_rows(scene, seq)
    summary = dict(base, success=True, error=None, **summarize(rows))
    summary["replans"] = int(seq.meta.get("replans", 0))
    if mode == "omms+cmms":
        summary["alpha_s"] = float(seq.meta["alpha_s"])
        summary["discarded_goals"] = int(sum(g.status == "discarded" for g in seq.meta["goals"]))
    return RunReport(name, rows, summary, seq, time.perf_counter() - t0)


def run_benchmark(scene, bench_id: int, mode: str, seed: int | None = None, out_dir=None) -> RunReport:
    if bench_id not in scene.benchmarks:
        raise ValueError(f"unknown benchmark {bench_id}; available: {sorted(scene.benchmarks)}")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    seed = scene.seed if seed is None else seed
    name = f"benchmark{bench_id}_{mode.replace('+', '_')}"
    rep = run_task(scene, scene.benchmarks[bench_id], mode, seed, name)
    rep.summary["benchmark"] = bench_id
    if out_dir is not None:
        rep.write(out_dir)
    return rep


# ---------------------------------------------------------------------------
# obstacle trials


def _table_top(scene) -> tuple:
    t = scene.obstacles.table
    c, h = t.pose.translation, np.asarray(t.half_extents)
    return c, h


def random_obstacle(scene, rng: np.random.Generator, keep_clear: list, max_tries: int = 200) -> Box:
    """Box resting on the table, uniform over the table surface, away from the given tool positions."""
    oc = scene.config["obstacle_trials"]
    lo = np.asarray(oc["box_half_min"], float)
    hi = np.asarray(oc["box_half_max"], float)
    clearance = float(oc["footprint_clearance"])
    c, h = _table_top(scene)
    top = c[2] + h[2]
    for _ in range(max_tries):
        half = rng.uniform(lo, hi)
        yaw = rng.uniform(0.0, 90.0)
        R = rot_z(yaw)
        # footprint radius bounds the rotated box
        foot = float(np.hypot(half[0], half[1]))
        x = rng.uniform(c[0] - h[0] + foot, c[0] + h[0] - foot)
        y = rng.uniform(c[1] - h[1] + foot, c[1] + h[1] - foot)
        centre = np.array([x, y, top + half[2]])
        if all(np.hypot(x - p[0], y - p[1]) > foot + clearance for p in keep_clear):
            return Box(Pose(R, centre), tuple(half))
    raise RuntimeError("could not place an obstacle box clear of the tool footprints")


def cable_hits_obstacle(scene, seq: MotionSequence) -> bool:
    """True when any state's cable comes within the margin of an obstacle box (table excluded)."""
    for s in seq.states:
        if cable_obstacle_clearance(s.cable.points(), scene.obstacles) <= scene.obstacles.margin:
            return True
    return False


def run_obstacle_trials(scene, n: int | None = None, seed: int | None = None, out_dir=None) -> dict:
    """Paired OMMS-only and OMMS+CMMS runs in balancer-less mode with one random box each."""
    base = scene.balancerless() if scene.anchor_mode == "balancer" else scene
    oc = base.config["obstacle_trials"]
    n = int(oc["n"]) if n is None else n
    seed = base.seed if seed is None else seed
    goal_ids = sorted(base.goals)
    trials = []
    t0 = time.perf_counter()
    for t in range(n):
        rng = np.random.default_rng([seed, t])
        ids = [int(g) for g in rng.choice(goal_ids, size=int(oc["goals_per_trial"]), replace=False)]
        keep = [base.start.translation] + [base.goals[i].translation for i in ids]
        box = random_obstacle(base, rng, keep)
        sc = base.with_obstacles([box])
        trial_seed = int(rng.integers(2**31))
        row = {"trial": t, "goals": ids, "box_center": [round(float(v), 6) for v in box.pose.translation],
               "box_half_extents": [round(float(v), 6) for v in box.half_extents]}
        for mode in ("omms", "omms+cmms"):
            rep = run_task(sc, ids, mode, trial_seed, f"trial{t}_{mode.replace('+', '_')}")
            planned = rep.success
            hit = cable_hits_obstacle(sc, rep.sequence) if planned else False
            key = "o" if mode == "omms" else "oc"
            row[f"{key}_planned"] = planned
            row[f"{key}_collision"] = hit
            row[f"{key}_success"] = planned and not hit
            row[f"{key}_mean_acc"] = rep.summary["mean_acc_ee"]
            if out_dir is not None:
                rep.write(Path(out_dir) / "trials")
        trials.append(row)
    table = aggregate_trials(trials)
    result = {"seed": seed, "n": n, "trials": trials, "table": table}
    if out_dir is not None:
        write_trials(result, out_dir, time.perf_counter() - t0)
    return result


def aggregate_trials(trials: list) -> list:
    out = []
    for key, label in (("o", "OMMS"), ("oc", "OMMS + CMMS")):
        planned = [t for t in trials if t[f"{key}_planned"]]
        out.append({
            "planner": label,
            "success": sum(t[f"{key}_success"] for t in trials),
            "collisions": sum(t[f"{key}_collision"] for t in trials),
            "planning_failures": len(trials) - len(planned),
            "mean_acc": (sum(t[f"{key}_mean_acc"] for t in planned) / len(planned)) if planned else None,
        })
    return out


def write_trials(result: dict, out_dir, seconds: float) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "obstacle_trials.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["planner", "success", "collisions", "planning_failures", "mean_acc"])
        for r in result["table"]:
            w.writerow([r["planner"], r["success"], r["collisions"], r["planning_failures"], "" if r["mean_acc"] is None else repr(r["mean_acc"])])
    (out / "obstacle_trials.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    _update_timing(out / "timing.json", "obstacle_trials", seconds)


# ---------------------------------------------------------------------------
# workspace analysis


def analyze_workspace(scene, spacing: float | None = None, seed: int | None = None, out_dir=None) -> dict:
    """Reach grid, balancer column ranking, slider manipulability field and sphere."""
    wc = scene.config["workspace"]
    spacing = float(wc["spacing"] if spacing is None else spacing)
    seed = scene.seed if seed is None else seed
    bounds = tuple(tuple(float(v) for v in b) for b in wc["bounds"])
    t0 = time.perf_counter()
    grid = build_reach_grid(scene.robot, bounds, spacing, seeds=int(wc["ik_seeds"]), seed=seed)
    columns = score_balancer_columns(grid)
    cable_arm = scene.arm("cable")
    tool_arm = scene.arm("tool")

    # slider x axis pointing towards the robot
    orientation = pose_from_axes((-1.0, 0.0, 0.0)).rotation
    manipulability_field(
        grid, cable_arm, scene.grasps[scene.slider.name], orientation,
        obstacles=scene.obstacles, static=arm_static_capsules(tool_arm, tool_arm.home),
        held_local=[], seeds=int(wc["ik_seeds"]), seed=seed,
    )
    try:
        sphere = manipulability_sphere(grid, wc["reference"], float(wc["M_frac"]), float(wc["G_frac"]))
        sphere_d = {
            "reference": [float(v) for v in sphere.reference],
            "radius": sphere.radius,
            "M_ref": sphere.M_ref,
            "G_ref": sphere.G_ref,
            "min_M": sphere.min_M,
            "min_G": sphere.min_G,
            "n_points": sphere.n_points,
            "M_frac": float(wc["M_frac"]),
            "G_frac": float(wc["G_frac"]),
        }
    except ValueError as exc:
        sphere_d = {"error": str(exc)}
    result = {
        "spacing": spacing,
        "dims": list(grid.dims),
        "n_reach_right": int(grid.reach_right.sum()),
        "n_reach_left": int(grid.reach_left.sum()),
        "n_omega": int(grid.omega.sum()),
        "columns": columns,
        "sphere": sphere_d,
        "grid": grid,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        grid.to_csv(out / "workspace_grid.csv")
        with open(out / "balancer_columns.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "x", "y", "count"])
            for i, (x, y, c) in enumerate(columns, 1):
                w.writerow([i, f"{x:g}", f"{y:g}", c])
        (out / "sphere.json").write_text(json.dumps(sphere_d, indent=2, sort_keys=True) + "\n")
        _update_timing(out / "timing.json", "analyze_workspace", time.perf_counter() - t0)
    return result
