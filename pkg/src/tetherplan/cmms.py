"""Cable manipulation motion sequences: the second arm places the cable slider.

For every state of a tool sequence the slider goal is projected behind the
tool tail along its unbent cable direction, then lifted to a minimum height.
Goals that the cable arm cannot reach, that make the cable touch the robot or
an obstacle, or that push the accumulation past the threshold are discarded;
the cable arm bridges discarded stretches by interpolation. The tool arm
joints are copied from the tool sequence unchanged, one cable-arm state per
tool state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cable import AccumulationTracker, CableState, advance, bending_angle
from .collision import MovingArmChecker, arm_static_capsules, cable_clear, cable_obstacle_clearance
from .geometry import Pose
from .grasps import object_pose_from_hand
from .kinematics import ArmModel, dedupe, ik_batch, manipulability_batch
from .omms import (
    MotionSequence,
    PlanState,
    held_capsules_local,
    hand_pose,
    replay_accumulation,
    static_object,
    _Planner,
)
from .rrt import PlanningError

# slide from the rest pose to the first goal in small moves of the hand
SLIDE_STEP_MM = 20.0
SLIDE_STEP_DEG = 2.0

# longest run of skipped slider goals bridged by joint interpolation
MAX_GAP = 12
DISCARD_REASONS = ("unreachable", "cable-collision", "accumulation")


@dataclass
class SliderGoal:
    position: np.ndarray
    source_step: int
    alpha_s: float
    status: str = "candidate"  # candidate | discarded | selected
    reason: Optional[str] = None


def project_slider_goal(tool_pose: Pose, alpha_s: float, min_height: float, tail_normal=(-1.0, 0.0, 0.0)) -> np.ndarray:
    """Point ``alpha_s`` behind the tool origin along the tail normal, lifted to ``min_height``."""
    if alpha_s <= 0:
        raise ValueError("alpha_s must be positive")
    u = np.asarray(tail_normal, float)
    u = u / np.linalg.norm(u)
    p = tool_pose.rotation @ (alpha_s * u) + tool_pose.translation
    lift = max(0.0, min_height - p[2])
    return p + np.array([0.0, 0.0, lift])


def slider_goals(omms: MotionSequence, alpha_s: float, min_height: float, tail_local) -> list:
    u = np.asarray(tail_local, float)
    return [SliderGoal(project_slider_goal(s.tool_pose, alpha_s, min_height, u), s.step, alpha_s) for s in omms.states]


def _unit(v) -> np.ndarray:
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def _slide_point(tail, p0, p1, t: float) -> np.ndarray:
    """Slider position at fraction ``t`` of a swing around the tool tail.

    Direction from the tail is interpolated on the sphere and distance
    linearly, so the slider keeps clear of the tool while it turns.
    """
    r0, r1 = np.linalg.norm(p0 - tail), np.linalg.norm(p1 - tail)
    d0, d1 = _unit(p0 - tail), _unit(p1 - tail)
    turn = float(np.arccos(np.clip(np.dot(d0, d1), -1.0, 1.0)))
    if np.sin(turn) < 1e-6:
        # (anti)parallel directions: plain straight-line move
        return p0 + (p1 - p0) * t
    d = (np.sin((1 - t) * turn) * d0 + np.sin(t * turn) * d1) / np.sin(turn)
    return tail + ((1 - t) * r0 + t * r1) * d


def _slide_points(tail, p0, p1) -> list:
    """Evenly spaced swing positions from ``p0`` (excluded) to ``p1``."""
    turn = np.arccos(np.clip(np.dot(_unit(p0 - tail), _unit(p1 - tail)), -1.0, 1.0))
    r0, r1 = np.linalg.norm(p0 - tail), np.linalg.norm(p1 - tail)
    n = int(np.ceil(max(abs(r1 - r0) / SLIDE_STEP_MM, np.rad2deg(turn) / SLIDE_STEP_DEG, np.linalg.norm(p1 - p0) / SLIDE_STEP_MM)))
    # n == 0: already at the goal, nothing to slide
    return [_slide_point(tail, p0, p1, k / n) for k in range(1, n + 1)]


def _slide(ca, chk, tail, p0, p1, q0, step: float, max_depth: int = 4):
    """Cable-arm configurations tracking the swing; halves a move when the
    joint step budget is exceeded. Returns None when no path is found."""
    path = [q0]

    def reach(ta, tb, depth):
        p = _slide_point(tail, p0, p1, tb)
        cand = ca.solve(p, p - tail, path[-1])
        cand = [q for q in cand if np.max(np.abs(q - path[-1])) <= step and chk.free(q[None])[0]]
        if cand:
            path.append(cand[0])
            return True
        if depth >= max_depth:
            return False
        mid = 0.5 * (ta + tb)
        return reach(ta, mid, depth + 1) and reach(mid, tb, depth + 1)

    n = len(_slide_points(tail, p0, p1))
    for k in range(1, n + 1):
        if not reach((k - 1) / n, k / n, 0):
            return None
    return path


def _slider_axis(grasp) -> np.ndarray:
    """Slider x axis (the cable direction) expressed in the hand frame."""
    return grasp.hand_pose_local.rotation.T[:, 0]


def _hand_target(position, direction, grasp) -> np.ndarray:
    """Hand position putting the slider centre at ``position`` with its x along ``direction``.

    Valid for grasps whose centre lies on the slider x axis.
    """
    t = grasp.hand_pose_local.translation
    return np.asarray(position, float) + float(t[0]) * np.asarray(direction, float)


class _CableArm:
    """Axis-constrained slider placement for one slider grasp."""

    def __init__(self, scene, grasp, rng, step):
        self.scene = scene
        self.arm: ArmModel = scene.arm("cable")
        self.grasp = grasp
        self.axis = _slider_axis(grasp)
        self.rng = rng
        self.step = step
        self.held = held_capsules_local(scene.slider, grasp)

    def solve(self, position, direction, q_prev, restarts: int = 4):
        """IK solutions ordered by joint distance to ``q_prev`` (warm start first)."""
        d = np.asarray(direction, float)
        d = d / np.linalg.norm(d)
        p = _hand_target(position, d, self.grasp)
        q0 = [q_prev] if q_prev is not None else []
        q0.extend(self.arm.random_q(self.rng, restarts, shrink=0.02))
        q0 = np.array(q0)
        q, ok, _, _ = ik_batch(self.arm, np.broadcast_to(d, (len(q0), 3)), p, q0, axis=self.axis)
        sols = dedupe([qq for qq, g in zip(q, ok) if g])
        if q_prev is not None:
            sols.sort(key=lambda s: float(np.max(np.abs(s - q_prev))))
        return sols

    def solve_many(self, position, direction, seeds, restarts: int = 2) -> np.ndarray:
        """De-duplicated IK solutions from warm starts ``seeds`` plus random restarts."""
        d = np.asarray(direction, float)
        d = d / np.linalg.norm(d)
        p = _hand_target(position, d, self.grasp)
        q0 = np.vstack([np.atleast_2d(seeds), self.arm.random_q(self.rng, restarts, shrink=0.02)])
        q, ok, _, _ = ik_batch(self.arm, np.broadcast_to(d, (len(q0), 3)), p, q0, axis=self.axis)
        sols = dedupe([qq for qq, g in zip(q, ok) if g])
        return np.array(sols).reshape(-1, self.arm.n)

    def slider_pose(self, q) -> Pose:
        return object_pose_from_hand(hand_pose(self.arm, q), self.grasp)

    def checker(self, q_tool, tool_pose):
        tool_arm = self.scene.arm("tool")
        static = arm_static_capsules(tool_arm, q_tool) + static_object(self.scene.tool, tool_pose, "tool")
        return MovingArmChecker(self.arm, self.scene.obstacles, static=static, held_local=self.held)


def _cable_state(scene, tool: Pose, slider_pos) -> CableState:
    return CableState(tool.apply(scene.tool_tail), scene.anchor, tool, slider=slider_pos)


def _cable_ok(scene, q_tool, q_cable, cable: CableState):
    arms = [(scene.arm("tool"), q_tool), (scene.arm("cable"), q_cable)]
    last = len(scene.arm("tool").link_capsules) - 1
    # both hands touch the cable: the tool hand at the tail, the cable hand at the slider
    exempt = {(0, last), (1, last)}
    return cable_clear(cable.points(), arms, scene.obstacles, exempt=exempt)


def _node_ok(scene, ca, s, qs, slider_pos):
    """Collision and cable checks for cable-arm configurations at one tool state.

    Returns (mask, reason) where reason names the first failing check kind.
    """
    qs = np.atleast_2d(qs)
    ok = ca.checker(s.q_tool_arm, s.tool_pose).free(qs)
    reason = "unreachable" if not ok.any() else None
    for k in np.flatnonzero(ok):
        p = slider_pos if slider_pos is not None else ca.slider_pose(qs[k]).translation
        cable = _cable_state(scene, s.tool_pose, p)
        clear, _, _ = _cable_ok(scene, s.q_tool_arm, qs[k], cable)
        if not clear:
            ok[k] = False
            reason = "cable-collision"
    return ok, reason


def _screen_goal(scene, s, g, limit):
    """Arm-independent reason a slider goal cannot be kept, or None."""
    cable = _cable_state(scene, s.tool_pose, g.position)
    bend = bending_angle(cable)
    if bend.signed > limit and not bend.indeterminate:
        return "accumulation"
    # the cable itself crosses a box: no arm configuration can help
    if cable_obstacle_clearance(cable.points(), scene.obstacles, include_table=True) < scene.obstacles.margin:
        return "cable-collision"
    return None


def _unbridgeable(reasons, max_gap: int):
    """Index of a blocked run no chain can cross (the chain must start within
    ``max_gap + 1`` goals of the start and end within ``max_gap - 1`` of the
    last goal), or None."""
    n = len(reasons)
    run = 0
    for i, r in enumerate(reasons):
        run = run + 1 if r is not None else 0
        if run > max_gap:
            return i
    if run >= max_gap:
        return n - 1
    return None


def _candidates(scene, ca, goals, omms, threshold, q_start, per_step: int, restarts: int, max_gap: int):
    """Feasible cable-arm configurations per goal, warm-started from the previous layer.

    Stops early (returning fewer layers than goals) once more than ``max_gap``
    consecutive goals have no candidate, since no chain can bridge them.
    """
    layers, reasons = [], []
    prev = [q_start]
    empty = 0
    limit = scene.beta + threshold
    for g, s in zip(goals, omms.states):
        if empty > max_gap:
            break
        tail = s.tool_pose.apply(scene.tool_tail)
        direction = g.position - tail
        why = _screen_goal(scene, s, g, limit)
        if why is not None:
            layers.append(np.zeros((0, ca.arm.n)))
            reasons.append(why)
            empty += 1
            continue
        seeds = np.array(prev[:per_step])
        sols = ca.solve_many(g.position, direction, seeds, restarts)
        if len(sols) == 0:
            layers.append(np.zeros((0, ca.arm.n)))
            reasons.append("unreachable")
            empty += 1
            continue
        ok, reason = _node_ok(scene, ca, s, sols, g.position)
        keep = sols[ok]
        if len(keep):
            ref = np.array(prev)
            dist = np.abs(keep[:, None, :] - ref[None]).max(axis=2).min(axis=1)
            keep = keep[np.argsort(dist, kind="stable")][:per_step]
            prev = list(keep)
        layers.append(keep)
        reasons.append(None if len(keep) else reason)
        empty = 0 if len(keep) else empty + 1
    return layers, reasons


def _dp(layers, q_start, step, max_gap, banned, skip_cost):
    """Cheapest chain through the layers with per-step joint budget ``step``.

    Layer -1 is the fixed start. Returns the chosen (layer, index) list or None.
    """
    n = len(layers)
    INF = np.inf
    cost = [np.full(len(L), INF) for L in layers]
    back = [[None] * len(L) for L in layers]
    start = np.asarray(q_start, float)[None]

    def sources(i):
        for j in range(max(-1, i - max_gap - 1), i):
            if j == -1:
                yield j, start, np.zeros(1)
            elif len(layers[j]):
                yield j, layers[j], cost[j]

    for i in range(n):
        L = layers[i]
        if not len(L):
            continue
        for j, Q, c in sources(i):
            span = i - j
            d = np.abs(L[:, None, :] - Q[None]).max(axis=2)  # (len L, len Q)
            reach = d <= step * span + 1e-9
            total = c[None, :] + np.linalg.norm(L[:, None, :] - Q[None], axis=2) + skip_cost * (span - 1)
            total = np.where(reach, total, INF)
            for k in range(len(L)):
                for m in np.argsort(total[k], kind="stable"):
                    if not np.isfinite(total[k, m]):
                        break
                    if ((j, int(m)), (i, k)) in banned:
                        continue
                    if total[k, m] < cost[i][k]:
                        cost[i][k] = total[k, m]
                        back[i][k] = (j, int(m))
                    break
    # finish at the last layer that can still be held to the end
    for i in range(n - 1, -1, -1):
        if len(layers[i]) and np.isfinite(cost[i]).any():
            k = int(np.argmin(cost[i]))
            chain = [(i, k)]
            while back[chain[-1][0]][chain[-1][1]][0] != -1:
                chain.append(back[chain[-1][0]][chain[-1][1]])
            return chain[::-1]
        if n - i > max_gap:
            break
    return None


def filter_candidates(goals: list, omms: MotionSequence, scene, threshold: float, grasp, rng=None, q_start=None,
                      per_step: int = 6, restarts: int = 2, max_gap: int = MAX_GAP, max_rounds: int = 60):
    """Mark each goal kept or discarded; returns (goals, per-goal cable-arm configuration or None).

    Every goal gets a set of feasible cable-arm configurations (IK with the
    slider axis along the cable, arm and held slider collision free, cable
    clear of robot links except both hands and of obstacles, bend within the
    accumulation limit). A dynamic program then picks one configuration per
    kept goal so that the joint step per tool state stays within the budget,
    skipping as few goals as possible. Skipped goals are bridged by joint
    interpolation; the bridged states and the accumulation along the whole
    chain are verified and offending transitions are banned before re-solving.
    """
    if len(goals) != len(omms.states):
        raise ValueError("goals must align 1:1 with the tool sequence")
    if q_start is None:
        raise ValueError("q_start (cable-arm configuration at the first goal) is required")
    rng = rng if rng is not None else np.random.default_rng(0)
    step = float(scene.planner["step"])
    ca = _CableArm(scene, grasp, rng, step)
    q_start = np.asarray(q_start, float)
    layers, reasons = _candidates(scene, ca, goals, omms, threshold, q_start, per_step, restarts, max_gap)
    banned = set()
    states = omms.states
    chain = None
    if len(layers) < len(goals):
        # an unbridgeable stretch: report it on the goals that were examined
        for i, g in enumerate(goals):
            g.status = "discarded"
            g.reason = reasons[i] if i < len(reasons) else None
        return goals, None
    for _ in range(max_rounds):
        chain = _dp(layers, q_start, step, max_gap, banned, skip_cost=50.0)
        if chain is None:
            break
        qs = [None] * len(goals)
        for i, k in chain:
            qs[i] = layers[i][k]
        filled = _fill_gaps(qs, q_start)
        bad_edge = _verify_chain(scene, ca, goals, states, qs, filled, chain, q_start, threshold)
        if bad_edge is None:
            break
        banned.add(bad_edge)
        chain = None
    kept = {i for i, _ in chain} if chain else set()
    out_q = []
    for i, g in enumerate(goals):
        if i in kept:
            g.status, g.reason = "selected", None
            out_q.append(layers[i][dict(chain)[i]])
        else:
            g.status, g.reason = "discarded", reasons[i] or "unreachable"
            out_q.append(None)
    if chain is None:
        return goals, None
    return goals, out_q


def _verify_chain(scene, ca, goals, states, qs, filled, chain, q_start, threshold):
    """First transition whose bridged states fail a check, or None when the chain is valid."""
    edges = {}
    prev = (-1, 0)
    for node in chain:
        edges[node[0]] = (prev, node)
        prev = node
    edge_of = {}
    nxt = None
    for i in range(len(goals) - 1, -1, -1):
        if i in edges:
            nxt = edges[i]
        edge_of[i] = nxt if nxt is not None else edges[chain[-1][0]]
    tracker = AccumulationTracker(beta=scene.beta)
    for i, (g, s) in enumerate(zip(goals, states)):
        q = filled[i]
        pos = g.position if qs[i] is not None else ca.slider_pose(q).translation
        if qs[i] is None:
            ok, _ = _node_ok(scene, ca, s, q[None], None)
            if not ok[0]:
                return edge_of[i]
        tracker = advance(tracker, bending_angle(_cable_state(scene, s.tool_pose, pos)))
        if tracker.acc_ee > threshold:
            return edge_of[i]
    return None


def _fill_gaps(qs: list, first_q) -> list:
    """Joint-space interpolation across discarded goals (trailing gaps hold the last configuration)."""
    out = list(qs)
    prev_i, prev_q = -1, first_q
    i = 0
    n = len(out)
    while i < n:
        if out[i] is not None:
            prev_i, prev_q = i, out[i]
            i += 1
            continue
        j = i
        while j < n and out[j] is None:
            j += 1
        if j == n:
            for k in range(i, n):
                out[k] = prev_q.copy()
            break
        nxt = out[j]
        span = j - prev_i
        for k in range(i, j):
            t = (k - prev_i) / span
            out[k] = prev_q + (nxt - prev_q) * t
        i = j
    return out


def _attempt(scene, omms: MotionSequence, alpha_s: float, threshold: float, grasp, rng, diag: dict):
    pl = _Planner(scene, int(rng.integers(2**31)))
    pl.rng = rng
    ca = _CableArm(scene, grasp, rng, pl.step)
    arm = ca.arm
    s0 = omms.states[0]
    goals = slider_goals(omms, alpha_s, scene.min_height, scene.tool_tail)
    screened = [_screen_goal(scene, s, g, scene.beta + threshold) for s, g in zip(omms.states, goals)]
    cut = _unbridgeable(screened, MAX_GAP)
    if cut is not None:
        diag["discarded"] = sum(r is not None for r in screened)
        diag["violation"] = {"step": omms.states[cut].step, "reason": f"no feasible chain of slider goals ({screened[cut]})"}
        return None

    # grasp the slider at rest, then slide it along the cable to the first goal
    rest = scene.slider_rest()
    rest_dir = rest.rotation[:, 0]
    sols = ca.solve(rest.translation, rest_dir, None, restarts=scene.planner["ik_seeds"])
    tool_static = arm_static_capsules(scene.arm("tool"), s0.q_tool_arm) + static_object(scene.tool, s0.tool_pose, "tool")
    chk = MovingArmChecker(arm, scene.obstacles, static=tool_static, held_local=ca.held)
    sols = [q for q in sols if chk.free(q[None])[0]]
    if not sols:
        raise PlanningError("no slider grasp", "slider grasp not reachable at rest")
    sols.sort(key=lambda q: -float(manipulability_batch(arm, q[None])[0]))
    q_grasp = sols[0]
    slider_static = static_object(scene.slider, ca.slider_pose(q_grasp), "slider")
    appr = pl.approach(arm, arm.home.copy(), q_grasp, tool_static, slider_static)

    # slide from rest to the first goal
    slide = _slide(ca, chk, s0.tool_pose.apply(scene.tool_tail), rest.translation, goals[0].position, q_grasp, pl.step)
    if slide is None:
        diag["violation"] = {"step": 0, "reason": "slide to first goal"}
        return None

    goals, qs = filter_candidates(goals, omms, scene, threshold, grasp, rng, q_start=slide[-1])
    diag["discarded"] = sum(g.status == "discarded" for g in goals)
    if qs is None:
        bad = [(g.source_step, g.reason) for g in goals if g.reason]
        step_, why = bad[-1] if bad else (None, "no feasible chain")
        diag["violation"] = {"step": step_, "reason": f"no feasible chain of slider goals ({why})"}
        return None
    qs = _fill_gaps(qs, slide[-1])

    pre_q = appr[:-1] + slide
    pre_phase = ["approach"] * (len(appr) - 1) + ["cable-follow"] * len(slide)
    states = []
    for q, ph in zip(pre_q, pre_phase):
        held = len(states) >= len(appr) - 1
        if held:
            sp = ca.slider_pose(q)
        else:
            sp = rest
        states.append(
            PlanState(len(states), s0.q_tool_arm, np.array(q, float), s0.tool_pose, sp, _cable_state(scene, s0.tool_pose, sp.translation),
                      phase=ph, source_step=0, tool_grasped=s0.tool_grasped, slider_grasped=held)
        )
    prev = np.array(pre_q[-1], float)
    for s, q, g in zip(omms.states, qs, goals):
        q = np.array(q, float)
        if np.max(np.abs(q - prev)) > pl.step + 1e-9:
            diag["violation"] = {"step": s.step, "reason": "cable-arm step exceeds joint budget"}
            return None
        sp = ca.slider_pose(q) if g.status == "discarded" else Pose(ca.slider_pose(q).rotation, g.position)
        cable = _cable_state(scene, s.tool_pose, sp.translation)
        states.append(
            PlanState(len(states), s.q_tool_arm, q, s.tool_pose, sp, cable, phase=s.phase, source_step=s.step,
                      tool_grasped=s.tool_grasped, slider_grasped=True)
        )
        prev = q

    seq = MotionSequence(states, tool_grasp=omms.tool_grasp, slider_grasp=grasp,
                         meta={"mode": "omms+cmms", "alpha_s": alpha_s, "goals": goals, "n_pre": len(pre_q)})
    replay_accumulation(seq, scene.beta)

    # final verification of every state
    for s in seq.states:
        if s.acc_ee > threshold + 1e-9:
            diag["violation"] = {"step": s.step, "reason": f"acc_ee {s.acc_ee:.2f} > {threshold}"}
            return None
        chk_s = ca.checker(s.q_tool_arm, s.tool_pose) if s.slider_grasped else None
        if chk_s is not None and not chk_s.free(s.q_cable_arm[None])[0]:
            diag["violation"] = {"step": s.step, "reason": "cable arm collision"}
            return None
        if s.slider_grasped:
            clear, _, who = _cable_ok(scene, s.q_tool_arm, s.q_cable_arm, s.cable)
            if not clear:
                diag["violation"] = {"step": s.step, "reason": f"cable collision with {who}"}
                return None
    return seq


def rank_slider_grasps(scene, grasps, rng) -> list:
    """Slider grasps ordered by the best manipulability reachable at the rest pose."""
    rest = scene.slider_rest()
    arm = scene.arm("cable")
    scored = []
    for i, g in enumerate(grasps):
        ca = _CableArm(scene, g, rng, 5.0)
        sols = ca.solve(rest.translation, rest.rotation[:, 0], None, restarts=scene.planner["ik_seeds"])
        if sols:
            m = float(manipulability_batch(arm, np.array(sols)).max())
            scored.append((m, i, g))
    scored.sort(key=lambda r: (-r[0], r[1]))
    return [g for _, _, g in scored]


def plan_cmms(omms: MotionSequence, scene, alpha_s: float | None = None, threshold: float | None = None, seed: int = 0, max_grasps: int = 2) -> MotionSequence:
    """Synchronized cable-arm sequence for a tool sequence.

    Tries the initial ``alpha_s`` and then exactly one reduction by the
    configured factor. Raises PlanningError("no slider grasp") or
    PlanningError("replan OMMS") with diagnostics of the last violation.
    """
    th = scene.thresholds
    alpha_s = float(th["alpha_s"] if alpha_s is None else alpha_s)
    threshold = float(th["acc"] if threshold is None else threshold)
    rng = np.random.default_rng(seed)
    grasps = rank_slider_grasps(scene, scene.grasps[scene.slider.name], rng)
    if not grasps:
        raise PlanningError("no slider grasp", "no slider grasp is IK-feasible at the rest pose")
    tried = []
    for alpha in (alpha_s, alpha_s * float(th["alpha_reduction"])):
        for g in grasps[:max_grasps]:
            diag = {"alpha_s": alpha}
            try:
                seq = _attempt(scene, omms, alpha, threshold, g, rng, diag)
            except PlanningError as exc:
                diag["violation"] = {"step": 0, "reason": str(exc)}
                seq = None
            tried.append(diag)
            if seq is not None:
                seq.meta["attempts"] = tried
                return seq
    raise PlanningError("replan OMMS", "slider goals cannot satisfy the constraints", {"attempts": tried})
