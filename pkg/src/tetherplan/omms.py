"""Object manipulation motion sequences: single-arm pick-and-place of the tool.

The tool arm approaches the tool at its start pose, grasps it with one grasp
from the database and carries it through the goal poses in order. Segments
between configurations are planned with RRT-connect in joint space. The cable
is ignored while planning; its metrics are replayed afterwards.

A minimal handover baseline is included: the tool is passed between the two
arms at a fixed exchange pose before every goal.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cable import AccumulationTracker, CableState, advance, bending_angle
from .collision import HeldObject, MovingArmChecker, arm_static_capsules, robot_collision_free
from .geometry import Pose, compose
from .grasps import GraspCandidate, object_pose_from_hand
from .kinematics import ArmModel, dedupe, fk_batch, ik_batch, manipulability_batch
from .rrt import PlanningError, interpolate, plan_path

PHASES = ("approach", "transfer", "place", "cable-follow")
PREGRASP_OFFSET = 60.0


@dataclass
class PlanState:
    step: int
    q_tool_arm: np.ndarray
    q_cable_arm: np.ndarray
    tool_pose: Pose
    slider_pose: Optional[Pose]
    cable: CableState
    acc_ee: float = 0.0
    acc_tool: float = 0.0
    phase: str = "approach"
    source_step: int = 0
    tool_grasped: bool = False
    slider_grasped: bool = False
    bend: float = 0.0

    def to_record(self) -> dict:
        return {
            "step": self.step,
            "phase": self.phase,
            "source_step": self.source_step,
            "q_tool_arm": [round(float(v), 9) for v in self.q_tool_arm],
            "q_cable_arm": [round(float(v), 9) for v in self.q_cable_arm],
            "tool_pose": [round(v, 9) for v in self.tool_pose.to_list()],
            "slider_pose": None if self.slider_pose is None else [round(v, 9) for v in self.slider_pose.to_list()],
            "cable": [[round(float(v), 9) for v in p] for p in self.cable.points()],
            "bend": round(self.bend, 9),
            "acc_ee": round(self.acc_ee, 9),
            "acc_tool": round(self.acc_tool, 9),
            "tool_grasped": self.tool_grasped,
            "slider_grasped": self.slider_grasped,
        }


@dataclass
class MotionSequence:
    states: list
    tool_grasp: Optional[GraspCandidate] = None
    slider_grasp: Optional[GraspCandidate] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.states:
            raise ValueError("a motion sequence needs at least one state")
        for i, s in enumerate(self.states):
            if s.step != i:
                raise ValueError(f"state {i} carries step index {s.step}")

    @property
    def annotations(self) -> list:
        return [s.phase for s in self.states]

    def __len__(self):
        return len(self.states)

    def place_indices(self) -> list:
        return [i for i, s in enumerate(self.states) if s.phase == "place"]

    def acc_ee(self) -> np.ndarray:
        return np.array([s.acc_ee for s in self.states])

    def acc_tool(self) -> np.ndarray:
        return np.array([s.acc_tool for s in self.states])

    def write_trace(self, path) -> None:
        with open(path, "w") as fh:
            for s in self.states:
                fh.write(json.dumps(s.to_record(), sort_keys=True) + "\n")


def replay_accumulation(seq: MotionSequence, beta: float) -> MotionSequence:
    """Thread a fresh accumulation tracker through the states (in place)."""
    tr = AccumulationTracker(beta=beta)
    for s in seq.states:
        b = bending_angle(s.cable)
        tr = advance(tr, b)
        s.acc_ee, s.acc_tool, s.bend = tr.acc_ee, tr.acc_tool, b.signed
    return seq


# ---------------------------------------------------------------------------
# helpers shared with the cable planner


def held_capsules_local(shape, grasp: GraspCandidate) -> list:
    """Capsules of ``shape`` in the hand frame for a given grasp."""
    return shape.capsules(grasp.hand_pose_local.inverse())


def static_object(shape, pose: Pose, name: str) -> list:
    return [(a, b, r, name) for a, b, r in shape.capsules(pose)]


def hand_pose(arm: ArmModel, q) -> Pose:
    R, p = fk_batch(arm, np.asarray(q, float)[None])
    return Pose(R[0], p[0])


def pregrasp(hand: Pose, offset: float = PREGRASP_OFFSET) -> Pose:
    """Hand pose backed off along its approach axis."""
    return Pose(hand.rotation, hand.translation - offset * hand.rotation[:, 2])


def ik_solutions(arm: ArmModel, targets, seeds: int, rng: np.random.Generator, q_init=None, tol=(1.0, 0.5)):
    """Batched IK over many target poses; returns per target a list of solutions."""
    n_t = len(targets)
    if n_t == 0:
        return []
    R = np.repeat(np.array([t.rotation for t in targets]), seeds, axis=0)
    p = np.repeat(np.array([t.translation for t in targets]), seeds, axis=0)
    q0 = arm.random_q(rng, n_t * seeds, shrink=0.02)
    if q_init is not None:
        q0[::seeds] = q_init
    q, ok, _, _ = ik_batch(arm, R, p, q0, tol)
    q = q.reshape(n_t, seeds, -1)
    ok = ok.reshape(n_t, seeds)
    return [dedupe([qq for qq, good in zip(q[i], ok[i]) if good]) for i in range(n_t)]


class _Planner:
    def __init__(self, scene, seed: int):
        self.scene = scene
        self.rng = np.random.default_rng(seed)
        pc = scene.planner
        self.step = float(pc["step"])
        self.out_step = float(pc.get("interp_step", self.step))
        self.out_mm = float(pc.get("interp_mm", np.inf))
        self.goal_bias = float(pc["goal_bias"])
        self.smooth = int(pc["smooth_iters"])
        self.max_iter = int(pc["max_iter"])
        self.timeout = float(pc["timeout"])
        self.ik_seeds = int(pc["ik_seeds"])
        self.obstacles = scene.obstacles

    def checker(self, arm, static=(), held_local=(), skip_static=()):
        return MovingArmChecker(arm, self.obstacles, static=static, held_local=held_local, skip_static=skip_static)

    def path(self, arm, checker, q0, q1):
        return plan_path(
            checker.free, q0, q1, arm.lower, arm.upper, self.rng,
            step=self.step, goal_bias=self.goal_bias, smooth_iters=self.smooth,
            max_iter=self.max_iter, timeout=self.timeout, out_step=self.out_step,
        )

    def rank_grasps(self, arm, grasps, poses, static):
        """Grasps feasible (IK + collision free while holding) at every pose, best first.

        Ranking is by the worst-case manipulability over the poses. Returns a
        list of (grasp, [free solutions per pose]).
        """
        shape = self.scene.tool
        targets = [compose(P, g.hand_pose_local) for g in grasps for P in poses]
        sols = ik_solutions(arm, targets, self.ik_seeds, self.rng)
        ranked = []
        n_p = len(poses)
        for gi, g in enumerate(grasps):
            chk = self.checker(arm, static, held_capsules_local(shape, g))
            per_pose = []
            score = np.inf
            for k in range(n_p):
                cand = sols[gi * n_p + k]
                if cand:
                    cand = np.array(cand)
                    cand = cand[chk.free(cand)]
                if len(cand) == 0:
                    per_pose = None
                    break
                m = manipulability_batch(arm, cand)
                order = np.argsort(-m, kind="stable")
                per_pose.append(cand[order])
                score = min(score, float(m[order[0]]))
            if per_pose is not None:
                ranked.append((score, gi, g, per_pose))
        ranked.sort(key=lambda r: (-r[0], r[1]))
        return [(g, pp) for _, _, g, pp in ranked]

    def refine(self, arm, path, checker):
        """Subdivide so the hand also moves at most ``out_mm`` between neighbours."""
        if len(path) < 2 or not np.isfinite(self.out_mm):
            return path
        _, p = fk_batch(arm, np.array(path))
        out = [path[0]]
        for a, b, d in zip(path[:-1], path[1:], np.linalg.norm(np.diff(p, axis=0), axis=1)):
            n = int(np.ceil(d / self.out_mm - 1e-9))
            out.extend(a + (b - a) * (k / n) for k in range(1, n))
            out.append(b)
        if len(out) > len(path) and not checker.free(np.array(out)).all():
            raise PlanningError("no path", "refined path collides")
        return out

    def approach(self, arm, q_from, q_grasp, static, obj_static):
        """home -> pre-grasp -> grasp. The object is an obstacle until the last stretch."""
        hand = hand_pose(arm, q_grasp)
        pre_targets = [pregrasp(hand)]
        sols = ik_solutions(arm, pre_targets, self.ik_seeds, self.rng, q_init=q_grasp)[0]
        chk = self.checker(arm, list(static) + list(obj_static))
        sols = [s for s in sols if chk.free(s[None])[0]]
        if not sols:
            raise PlanningError("no path", "no collision-free pre-grasp configuration")
        sols.sort(key=lambda s: float(np.max(np.abs(s - q_grasp))))
        q_pre = sols[0]
        first = self.path(arm, chk, q_from, q_pre)
        last = interpolate([q_pre, q_grasp], self.out_step)
        near = self.checker(arm, static)
        if not near.free(np.array(last)).all():
            raise PlanningError("no path", "final grasp approach collides")
        return first + last[1:]

    def retreat(self, arm, q_grasp, q_home, static, obj_static):
        return self.approach(arm, q_home, q_grasp, static, obj_static)[::-1]

    def carry(self, arm, grasp, q_from, goal_sols, static):
        """Carry the held tool from ``q_from`` through one goal per entry of ``goal_sols``."""
        chk = self.checker(arm, static, held_capsules_local(self.scene.tool, grasp))
        qs, phases = [q_from], ["place"]
        q = q_from
        for sols in goal_sols:
            order = np.argsort([float(np.linalg.norm(s - q)) for s in sols], kind="stable")
            seg = None
            last_err = None
            for i in order[:3]:
                try:
                    seg = self.path(arm, chk, q, sols[i])
                    break
                except PlanningError as exc:
                    last_err = exc
            if seg is None:
                raise last_err or PlanningError("no path", "no goal configuration")
            seg = self.refine(arm, seg, chk)
            qs.extend(seg[1:])
            phases.extend(["transfer"] * (len(seg) - 2) + ["place"])
            if len(seg) == 1:
                # goal configuration equals the current one
                qs.append(seg[0])
                phases.append("place")
            q = qs[-1]
        return qs, phases


def _tool_from(arm, q, grasp) -> Pose:
    return object_pose_from_hand(hand_pose(arm, q), grasp)


def _cable(scene, tool: Pose) -> CableState:
    return CableState(tool.apply(scene.tool_tail), scene.anchor, tool)


def plan_omms(scene, start: Pose, goals: list, seed: int = 0, grasp_rank: int = 0) -> MotionSequence:
    """Grasp the tool at ``start`` and visit ``goals`` in order with the tool arm.

    Feasible grasps are tried in order of worst-case manipulability, starting
    at position ``grasp_rank`` (used when a plan is redone with another grasp).
    Raises PlanningError("no grasp") when no single grasp is feasible at the
    start and every goal, PlanningError("no path") when RRT fails.
    """
    if not goals:
        raise ValueError("at least one goal pose is required")
    pl = _Planner(scene, seed)
    arm = scene.arm("tool")
    other = scene.arm("cable")
    q_other = other.home.copy()
    static = arm_static_capsules(other, q_other)
    ranked = pl.rank_grasps(arm, scene.grasps[scene.tool.name], [start, *goals], static)
    if not ranked:
        raise PlanningError("no grasp", "no tool grasp is IK-feasible and collision free at every pose")

    tool_static = static_object(scene.tool, start, "tool")
    last_err = None
    k = grasp_rank % len(ranked)
    for grasp, per_pose in (ranked[k:] + ranked[:k])[:4]:
        try:
            q_grasp = per_pose[0][0]
            appr = pl.approach(arm, arm.home.copy(), q_grasp, static, tool_static)
            qs, phases = pl.carry(arm, grasp, q_grasp, per_pose[1:], static)
        except PlanningError as exc:
            last_err = exc
            continue
        states = []
        all_q = appr[:-1] + qs
        all_p = ["approach"] * (len(appr) - 1) + ["approach"] + phases[1:]
        n_appr = len(appr) - 1
        for i, (q, ph) in enumerate(zip(all_q, all_p)):
            grasped = i >= n_appr
            tool = _tool_from(arm, q, grasp) if grasped else start
            states.append(
                PlanState(i, np.array(q, float), q_other, tool, None, _cable(scene, tool), phase=ph, source_step=i, tool_grasped=grasped)
            )
        seq = MotionSequence(states, tool_grasp=grasp, meta={"mode": "omms", "seed": seed, "n_goals": len(goals), "grasp_rank": k})
        return replay_accumulation(seq, scene.beta)
    raise last_err


def verify_sequence(scene, seq: MotionSequence, check_slider: bool = True):
    """Re-run robot_collision_free on every state; returns the list of failing steps."""
    arms = [scene.arm("tool"), scene.arm("cable")]
    bad = []
    for s in seq.states:
        held = []
        if s.tool_grasped:
            held.append(HeldObject("tool", scene.tool.capsules(s.tool_pose), 0))
        if check_slider and s.slider_pose is not None and s.slider_grasped:
            held.append(HeldObject("slider", scene.slider.capsules(s.slider_pose), 1))
        rep = robot_collision_free(list(zip(arms, [s.q_tool_arm, s.q_cable_arm])), held, scene.obstacles)
        if not rep.free:
            bad.append((s.step, rep.pair))
    return bad


# ---------------------------------------------------------------------------
# handover baseline


def plan_handover(scene, start: Pose, goals: list, seed: int = 0) -> MotionSequence:
    """Tool passed between arms at the fixed exchange pose before every goal.

    The tool arm carries start -> exchange; then holders alternate, each one
    taking the tool at the exchange pose, visiting one goal and bringing it
    back. The last holder stays at the final goal. The giving arm returns to
    its home configuration after every exchange.
    """
    pl = _Planner(scene, seed)
    X = scene.exchange
    arms = {"tool": scene.arm("tool"), "cable": scene.arm("cable")}
    q = {role: arm.home.copy() for role, arm in arms.items()}
    rows = []  # (q_tool, q_cable, tool pose, phase, grasped)

    def emit(role, path, phase_list, tool_fn, grasped=True):
        for qq, ph in zip(path, phase_list):
            q[role] = np.array(qq, float)
            rows.append((q["tool"].copy(), q["cable"].copy(), tool_fn(qq), ph, grasped))

    holder, other = "tool", "cable"
    legs = [[start, X]] + [[X, g, X] for g in goals[:-1]] + [[X, goals[-1]]]
    for k, poses in enumerate(legs):
        arm, g_arm = arms[holder], arms[other]
        home_static = arm_static_capsules(g_arm, g_arm.home)
        ranked = pl.rank_grasps(arm, scene.grasps[scene.tool.name], poses, home_static)
        if not ranked:
            raise PlanningError("no grasp", f"handover leg {k} has no feasible grasp for the {arm.name} arm")
        tool_here = poses[0]
        tool_static = static_object(scene.tool, tool_here, "tool")
        giver_static = arm_static_capsules(g_arm, q[other])
        last_err = None
        options = [(g, pp, q0) for g, pp in ranked for q0 in pp[0][:3]]
        for grasp, per_pose, q_grasp in options[:24]:
            try:
                appr = pl.approach(arm, q[holder], q_grasp, giver_static, tool_static)
                back = []
                if k > 0:
                    # giver lets go and returns home; the tool is now held by the receiver
                    back = pl.retreat(g_arm, q[other], g_arm.home.copy(), arm_static_capsules(arm, q_grasp), tool_static)
                qs, phases = pl.carry(arm, grasp, q_grasp, per_pose[1:], home_static)
            except PlanningError as exc:
                last_err = exc
                continue
            break
        else:
            raise last_err
        emit(holder, appr, ["approach"] * len(appr), lambda _q, t=tool_here: t, grasped=k > 0)
        emit(other, back, ["approach"] * len(back), lambda _q, t=tool_here: t)
        emit(holder, qs[1:], phases[1:], lambda qq, a=arm, g=grasp: _tool_from(a, qq, g))
        holder, other = other, holder

    states = []
    for i, (qt, qc, tool, ph, grasped) in enumerate(rows):
        states.append(PlanState(i, qt, qc, tool, None, _cable(scene, tool), phase=ph, source_step=i, tool_grasped=grasped))
    seq = MotionSequence(states, meta={"mode": "handover", "seed": seed, "n_goals": len(goals)})
    return replay_accumulation(seq, scene.beta)
