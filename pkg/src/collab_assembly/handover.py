"""Robot-robot and robot-human handover selection and the per-board plan."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kinematics as kin
from .collision import BoxSet, any_overlap, segment_boxes
from .comfort import ComfortScore, GoalPoseCandidate, board_hits, rank_goal_poses, sample_goal_poses
from .errors import (ForceBudgetExceeded, InvalidEndpoint, NoBimanualPose, NoHandoverPose,
                     PlanningError, PlanningFailed, Unreachable)
from .grasping import (Arm, BoardSpec, GraspCandidate, GraspSet, arm_boxes, arm_collides,
                       feasible_grasps_batch, generate_candidates, shared_grasps)
from .planner import MotionPlan, inclination_from_rotation, plan_object_transfer, transfer_limit
from .se3 import Pose, rot_z, rotation_distance

log = logging.getLogger(__name__)

SUCTION_YAWS = np.radians([0.0, 90.0, 180.0, 270.0])
RR_GRID_X = (0.30, 0.38, 0.46)
RR_GRID_Y = (-0.08, 0.0, 0.08)
RR_GRID_Z = (0.35, 0.45)
RR_GRID_YAW = np.radians([0.0, 90.0, 180.0, 270.0])
MAX_GRASPS_PER_CANDIDATE = 3


@dataclass(frozen=True)
class SuctionAttach:
    """The suction tool stuck to the top face above the board's CoM."""

    arm: str
    point: tuple           # attach point in the board frame
    yaw: float             # tool roll about the board normal
    tool_length: float

    def tcp_in_object(self) -> Pose:
        a = np.array([0.0, 0.0, -1.0])
        o = np.array([np.cos(self.yaw), np.sin(self.yaw), 0.0])
        R = np.column_stack([np.cross(o, a), o, a])
        return Pose(np.array(self.point) - self.tool_length * a, R)

    def to_record(self) -> dict:
        return {"type": "suction", "arm": self.arm, "point": list(self.point),
                "yaw": float(self.yaw), "tool_length": self.tool_length}


@dataclass(eq=False)
class RRHandover:
    pose: Pose
    attach: SuctionAttach
    q_pick: np.ndarray
    q_suction: np.ndarray
    grasps: GraspSet        # receiving arm grasps at the pose
    score: int
    index: int
    admissible: int = 0


@dataclass(eq=False)
class HandoverCandidate:
    pose: Pose
    comfort: ComfortScore
    shared: list
    quality: float
    index: int = 0
    robot_set: GraspSet | None = None
    scores: list = field(default_factory=list)


@dataclass(eq=False)
class HandoverPlanStep:
    kind: str
    actor: str
    object: str
    start: Pose
    end: Pose
    grasp: object
    config: np.ndarray | None = None
    plan: MotionPlan | None = None

    def to_record(self) -> dict:
        from .records import pose_to_record
        rec = {"kind": self.kind, "actor": self.actor, "object": self.object,
               "start": pose_to_record(self.start), "end": pose_to_record(self.end),
               "grasp": self.grasp.to_record() if self.grasp is not None else None}
        if self.config is not None:
            rec["config"] = [float(v) for v in self.config]
        if self.plan is not None:
            rec["plan"] = self.plan.to_record()
        return rec


@dataclass(eq=False)
class HandoverResult:
    steps: list
    diagnostics: dict
    env: object = None       # PlanEnv of the constrained move


# ---------------------------------------------------------------- robot-robot

def tool_box(tcp_R, tcp_p, length: float, radius: float):
    """Tool stick as OBB arrays, from the TCP to just short of the tip."""
    a = tcp_R[..., :, 2]
    return segment_boxes(tcp_p, tcp_p + a * (length - radius - 1e-3), radius)


def suction_boxes(scene, q) -> BoxSet:
    """The suction arm and its tool at ``q`` as static obstacle boxes."""
    arm = scene.robot.arm(scene.robot.suction_arm)
    Q = np.atleast_2d(q)
    Rs, ps, R_tcp, p_tcp = kin.joint_frames(arm.chain, Q)
    c, R, h = arm_boxes(arm, Rs, ps, R_tcp, p_tcp)
    tc, tR, th = tool_box(R_tcp, p_tcp, scene.robot.tool_length, scene.robot.tool_radius)
    return BoxSet(np.concatenate([c[0], tc]), np.concatenate([R[0], tR]), np.concatenate([h[0], th]))


def _suction_ik(scene, arm: Arm, board: BoardSpec, pose: Pose, attach: SuctionAttach,
                obstacles: BoxSet, held: bool = True):
    target = pose @ attach.tcp_in_object()
    chain = arm.chain
    seeds = chain.ik_seeds
    res = kin.ik_batch(chain, np.repeat(target.R[None], len(seeds), 0),
                       np.repeat(target.p[None], len(seeds), 0), seeds)
    for i in np.nonzero(res.success)[0]:
        q = res.q[i]
        tool = BoxSet(*tool_box(target.R[None], target.p[None], scene.robot.tool_length,
                                scene.robot.tool_radius))
        board_set = BoxSet.of([board.obb(pose)]) if held else None
        if arm_collides(arm, q, obstacles, board_set)[0]:
            continue
        # the tool must clear the environment as well
        if any_overlap(tool, obstacles):
            continue
        return q
    return None


def rr_grid(scene) -> list[Pose]:
    poses = []
    for x in RR_GRID_X:
        for y in RR_GRID_Y:
            for z in RR_GRID_Z:
                for yaw in RR_GRID_YAW:
                    poses.append(Pose(np.array([x, y, z]), rot_z(yaw)))
    return poses


def rr_workspace_center() -> np.ndarray:
    return np.array([np.mean(RR_GRID_X), np.mean(RR_GRID_Y), np.mean(RR_GRID_Z)])


def select_rr_handover_pose(board: BoardSpec, init_pose: Pose, scene, candidates=None,
                            include_initial: bool = True) -> RRHandover:
    robot = scene.robot
    s_arm = robot.arm(robot.suction_arm)
    r_arm = robot.arm(robot.receiving_arm)
    # the tool touches the board from above, so stack neighbours are left out here
    pick_obstacles = BoxSet.of(scene.fixtures + robot.body + scene.human.body)
    q_pick = attach = None
    for yaw in SUCTION_YAWS:
        att = SuctionAttach(robot.suction_arm, (0.0, 0.0, board.thickness / 2.0), float(yaw),
                            robot.tool_length)
        q = _suction_ik(scene, s_arm, board, init_pose, att, pick_obstacles, held=False)
        if q is not None:
            q_pick, attach = q, att
            break
    if q_pick is None:
        raise Unreachable(f"board {board.id}: suction arm cannot reach the initial pose")

    poses = list(candidates) if candidates is not None else rr_grid(scene)
    if include_initial and candidates is None:
        poses = [init_pose] + poses
    base_obstacles = scene.robot_obstacles(board.id)
    place_obstacles = scene.placement_obstacles(board.id)
    free = ~board_hits(board, poses, place_obstacles)
    recv_cands = generate_candidates(board, r_arm.owner, scene.settings.grasp_spacing,
                                     r_arm.effector.max_opening)
    center = rr_workspace_center()
    best = None
    admissible = []
    suction_q = {}
    for i, pose in enumerate(poses):
        if not free[i]:
            continue
        q = _suction_ik(scene, s_arm, board, pose, attach, base_obstacles)
        if q is not None:
            suction_q[i] = q
    if suction_q and len(recv_cands):
        idx = list(suction_q)
        sets = feasible_grasps_batch(board, [poses[i] for i in idx], recv_cands, r_arm, base_obstacles,
                                     extra=[suction_boxes(scene, suction_q[i]) for i in idx],
                                     pad=scene.settings.collision_pad)
        for i, gs in zip(idx, sets):
            q = suction_q[i]
            if not gs.grasps:
                continue
            key = (-len(gs), float(np.linalg.norm(poses[i].p - center)), i)
            admissible.append(key)
            if best is None or key < best[0]:
                best = (key, RRHandover(poses[i], attach, q_pick, q, gs, len(gs), i))
    if best is None:
        raise NoBimanualPose(f"board {board.id}: no pose in the bimanual grid admits a suction hold "
                             f"and a receiving grasp")
    best[1].admissible = len(admissible)
    return best[1]


# ---------------------------------------------------------------- robot-human

def handover_quality(pose: Pose, target: Pose, w_rot: float) -> float:
    return float(np.linalg.norm(pose.p - target.p) + w_rot * rotation_distance(pose.R, target.R))


def filter_comfortable(candidates, board: BoardSpec, human, threshold: float, obstacles=None,
                       spacing: float = 0.05) -> list[GoalPoseCandidate]:
    """Poses whose most comfortable stable human grasp beats ``threshold``.

    ``candidates`` may be raw poses or an already ranked list.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("comfort threshold must lie in (0, 1)")
    candidates = list(candidates)
    if not candidates:
        return []
    if isinstance(candidates[0], GoalPoseCandidate):
        ranked = candidates
    else:
        ranked = rank_goal_poses(board, candidates, human, obstacles, spacing)
    return [c for c in ranked if c.best_score.value > threshold]


def filter_shared(S, rr_set: GraspSet, board: BoardSpec, receiving_arm: Arm, obstacles: BoxSet,
                  spacing: float = 0.05, pad: float = 0.0) -> list[HandoverCandidate]:
    S = list(S)
    if not S or not rr_set.grasps:
        return []
    cands = generate_candidates(board, receiving_arm.owner, spacing, receiving_arm.effector.max_opening)
    # only candidates feasible at the robot-robot pose can be shared
    keys = set(rr_set.keys())
    cands = [c for c in cands if c.key in keys]
    sets = feasible_grasps_batch(board, [c.pose for c in S], cands, receiving_arm, obstacles, pad=pad)
    out = []
    for c, gs in zip(S, sets):
        shared = shared_grasps(gs, rr_set)
        if shared:
            out.append(HandoverCandidate(c.pose, c.best_score, shared, 0.0, c.index, gs, c.all_scores))
    return out


def select_handover_pose(SS, assembly_pose: Pose, w_rot: float = 0.1) -> list[HandoverCandidate]:
    SS = list(SS)
    if not SS:
        raise NoHandoverPose("no comfortable pose shares a grasp with the robot-robot handover pose")
    for c in SS:
        c.quality = handover_quality(c.pose, assembly_pose, w_rot)
    return sorted(SS, key=lambda c: (c.quality, c.index))


# ---------------------------------------------------------------- plan

def transfer_obstacles(scene, board_id: str) -> BoxSet:
    """Static boxes for the constrained move: the scene plus the parked suction arm."""
    robot = scene.robot
    park = suction_boxes(scene, robot.home_config(robot.suction_arm))
    return scene.robot_obstacles(board_id).concat(park)


def build_handover_plan(board: BoardSpec, init_pose: Pose, assembly_pose: Pose, scene,
                        seed: int | None = None) -> HandoverResult:
    seed = scene.settings.seed if seed is None else seed
    diag: dict = {"board": board.id}
    try:
        return _build(board, init_pose, assembly_pose, scene, seed, diag)
    except PlanningError as exc:
        # keep what was learned so a failed trace still explains itself
        exc.diagnostics = diag
        raise


def _build(board, init_pose, assembly_pose, scene, seed, diag) -> HandoverResult:
    st = scene.settings
    robot = scene.robot
    r_arm = robot.arm(robot.receiving_arm)
    rr = select_rr_handover_pose(board, init_pose, scene)
    diag["rr_index"] = rr.index
    diag["rr_grasps"] = rr.score

    samples = sample_goal_poses(board, assembly_pose, scene.placement_obstacles(board.id),
                                st.goal_samples, seed, st.max_rot, st.max_trans)
    diag["samples"] = len(samples)
    diag["rejected"] = samples.rejected
    ranked = rank_goal_poses(board, list(samples), scene.human, scene.human_obstacles(),
                             st.human_grasp_spacing)
    S = filter_comfortable(ranked, board, scene.human, st.comfort_threshold)
    diag["S"] = len(S)
    obstacles = transfer_obstacles(scene, board.id)
    SS = filter_shared(S, rr.grasps, board, r_arm, obstacles, st.grasp_spacing, st.collision_pad)
    diag["SS"] = len(SS)
    ordered = select_handover_pose(SS, assembly_pose, st.w_rot)

    rr_q = {g.key: q for g, q in rr.grasps.grasps}
    attempts = []
    limit = st.max_handover_attempts or len(ordered)
    for rank, cand in enumerate(ordered[:limit]):
        rh_q = {g.key: q for g, q in cand.robot_set.grasps}
        tried = 0
        for g, lim in _grasps_by_limit(cand.shared, board, r_arm, robot):
            if tried >= MAX_GRASPS_PER_CANDIDATE:
                break
            # cheap endpoint screen before spending planning time
            tcp_R = (cand.pose @ g.tcp_in_object()).R
            if lim < np.pi / 2 and inclination_from_rotation(tcp_R, st.inclination_mode) > lim - st.constraint_margin:
                attempts.append({"candidate": cand.index, "grasp": g.index, "result": "inclination"})
                continue
            tried += 1
            plan = None
            for q_goal in _goal_configs(r_arm, cand.pose, g, rr_q[g.key], rh_q[g.key]):
                try:
                    plan = plan_object_transfer(r_arm, board, g, rr.pose, cand.pose, obstacles, robot.pads,
                                                robot.grip_force, settings=st, seed=seed + rank,
                                                q_start=rr_q[g.key], q_goal=q_goal)
                    break
                except InvalidEndpoint as exc:
                    result = type(exc).__name__
                except PlanningFailed as exc:
                    result = type(exc).__name__
                    break
            if plan is None:
                attempts.append({"candidate": cand.index, "grasp": g.index, "result": result})
                continue
            attempts.append({"candidate": cand.index, "grasp": g.index, "result": "ok"})
            diag["chosen"] = rank
            diag["chosen_sample"] = cand.index
            diag["quality"] = cand.quality
            diag["comfort"] = cand.comfort.value
            diag["attempts"] = attempts
            diag["slip"] = plan.stats["slip"]
            steps = _steps(board, init_pose, rr, cand, g, rr_q[g.key], plan, robot)
            return HandoverResult(steps, diag, plan.stats["env"])
    diag["attempts"] = attempts
    raise PlanningFailed(f"board {board.id}: no handover candidate could be reached "
                         f"({len(attempts)} attempts over {len(ordered)} candidates)")


def _goal_configs(arm: Arm, pose: Pose, g: GraspCandidate, q_start, q_known, keep: int = 3) -> list:
    """Goal IK solutions ordered by joint distance from ``q_start``.

    Solutions seeded from the start stay on its arm branch; the rest are
    shifted by whole turns towards it.  Distant branches make the planner
    swing the whole arm through the workspace, which rarely fits the budget.
    """
    chain = arm.chain
    target = pose @ g.tcp_in_object()
    seeds = np.vstack([q_start, q_known, chain.ik_seeds])
    res = kin.ik_batch(chain, np.repeat(target.R[None], len(seeds), 0),
                       np.repeat(target.p[None], len(seeds), 0), seeds)
    Q = kin.nearest_equivalent(chain, res.q[res.success], q_start)
    out = []
    for q in sorted(Q, key=lambda q: float(np.linalg.norm(q - q_start))):
        if all(np.abs(q - o).max() > 1e-3 for o in out):
            out.append(q)
    return out[:keep] or [np.asarray(q_known, float)]


def _grasps_by_limit(shared, board, arm, robot):
    rows = []
    for g in shared:
        try:
            lim = transfer_limit(board, g, arm, robot.pads, robot.grip_force).relaxation_limit
        except ForceBudgetExceeded:
            continue
        rows.append((g, lim))
    # most permissive grasps first, generation order breaks ties
    rows.sort(key=lambda r: (-r[1], r[0].index))
    return rows


def _steps(board, init_pose, rr: RRHandover, cand: HandoverCandidate, g: GraspCandidate, q_rr,
           plan: MotionPlan, robot) -> list:
    human_grasp = cand.comfort.grasp
    return [
        HandoverPlanStep("suction-pick", robot.suction_arm, board.id, init_pose, rr.pose, rr.attach,
                         rr.q_suction),
        HandoverPlanStep("robot-robot-transfer", robot.receiving_arm, board.id, rr.pose, rr.pose, g, q_rr),
        HandoverPlanStep("constrained-move", robot.receiving_arm, board.id, rr.pose, cand.pose, g,
                         plan.waypoints[-1], plan),
        HandoverPlanStep("human-release", human_grasp.owner, board.id, cand.pose, cand.pose,
                         human_grasp, cand.comfort.human_config),
    ]
