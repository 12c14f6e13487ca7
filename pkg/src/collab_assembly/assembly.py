"""The multi-board assembly loop and the plan-trace file.

Traces are JSON.  Reals are written with Python's shortest round-trip
representation, so reading a trace back gives the exact planned values.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kinematics as kin
from .errors import PlanningError, SceneError
from .grasping import GraspCandidate
from .handover import build_handover_plan, transfer_obstacles
from .planner import InclinationConstraint, MotionPlan, PlanEnv, transfer_limit, validate_plan
from .records import pose_from_record
from .scene_io import settings_to_record
from .se3 import rotation_distance

log = logging.getLogger(__name__)

TRACE_FORMAT = "collab-assembly-trace"
TRACE_VERSION = 1
STEP_KINDS = ("suction-pick", "robot-robot-transfer", "constrained-move", "human-release")
POSE_TOL_POS = 1e-4
POSE_TOL_ROT = 1e-3


def jsonable(value):
    """Plain JSON types for diagnostics that may hold numpy values or records."""
    if hasattr(value, "to_record"):
        return jsonable(value.to_record())
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


@dataclass
class BoardTrace:
    board: str
    status: str                      # "ok" or "failed"
    steps: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    error: dict | None = None
    elapsed_s: float = 0.0

    def to_record(self) -> dict:
        rec = {"board": self.board, "status": self.status,
               "steps": [s.to_record() for s in self.steps],
               "diagnostics": jsonable(self.diagnostics), "elapsed_s": self.elapsed_s}
        if self.error is not None:
            rec["error"] = self.error
        return rec


@dataclass
class PlanTrace:
    scene: str
    seed: int
    settings: dict
    sequence: list
    boards: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return (len(self.boards) == len(self.sequence)
                and all(b.status == "ok" for b in self.boards))

    @property
    def failure(self) -> BoardTrace | None:
        return next((b for b in self.boards if b.status != "ok"), None)

    def step_counts(self) -> dict:
        counts = {k: 0 for k in STEP_KINDS}
        for b in self.boards:
            for s in b.steps:
                counts[s.kind] = counts.get(s.kind, 0) + 1
        return counts

    def to_record(self) -> dict:
        return {"format": TRACE_FORMAT, "version": TRACE_VERSION, "scene": self.scene,
                "seed": self.seed, "settings": self.settings, "sequence": list(self.sequence),
                "complete": self.complete, "boards": [b.to_record() for b in self.boards]}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_record(), indent=1) + "\n")


def run_assembly(scene, seed: int | None = None, on_board=None) -> PlanTrace:
    """Plan every board in sequence order; stop at the first board that fails.

    The input scene is not modified: a working copy accumulates the finished
    boards.  ``on_board`` is called with each BoardTrace as it completes.
    """
    seed = scene.settings.seed if seed is None else int(seed)
    work = replace(scene, finished=list(scene.finished))
    trace = PlanTrace(scene.name, seed, settings_to_record(scene.settings), list(scene.sequence))
    for k, bid in enumerate(scene.sequence):
        board = work.board(bid)
        t0 = time.perf_counter()
        try:
            # each board gets its own stream so traces do not depend on earlier retries
            res = build_handover_plan(board, work.initial_poses[bid], work.assembly_poses[bid], work,
                                      seed=seed + 1000 * k)
        except PlanningError as exc:
            bt = BoardTrace(bid, "failed", [], getattr(exc, "diagnostics", {}) or {"board": bid},
                            {"type": type(exc).__name__, "message": str(exc)},
                            time.perf_counter() - t0)
            trace.boards.append(bt)
            log.warning("board %s failed: %s", bid, exc)
            if on_board:
                on_board(bt)
            break
        bt = BoardTrace(bid, "ok", res.steps, res.diagnostics, None, time.perf_counter() - t0)
        trace.boards.append(bt)
        work.finished.append((board, work.assembly_poses[bid]))
        if on_board:
            on_board(bt)
    return trace


# ---------------------------------------------------------------- replay checks

@dataclass
class BoardCheck:
    board: str
    ok: bool
    problems: list
    report: dict | None = None


@dataclass
class TraceCheck:
    boards: list
    problems: list

    @property
    def ok(self) -> bool:
        return not self.problems and all(b.ok for b in self.boards)


def load_trace(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SceneError(f"trace file {str(path)!r} not found")
    try:
        rec = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(rec, dict) or rec.get("format") != TRACE_FORMAT:
        raise SceneError(f"{path}: not a plan trace")
    return rec


def _field(rec, key, where):
    if not isinstance(rec, dict) or key not in rec:
        raise SceneError(f"{where}: missing field {key!r}")
    return rec[key]


def _plan_from_record(rec, where) -> MotionPlan:
    c = _field(rec, "constraint", where)
    try:
        constraint = InclinationConstraint(float(_field(c, "limit", f"{where}.constraint")),
                                           str(c.get("mode", "roll")))
        W = np.asarray(_field(rec, "waypoints", where), dtype=float)
        times = np.asarray(rec.get("times", np.zeros(len(W))), dtype=float)
    except (TypeError, ValueError) as exc:
        raise SceneError(f"{where}: {exc}") from None
    if W.ndim != 2 or len(W) == 0:
        raise SceneError(f"{where}.waypoints: expected a non-empty list of configurations")
    grasp = GraspCandidate.from_record(_field(rec, "grasp", where)) if "grasp" in rec else None
    binding = (rec.get("object"), grasp) if grasp is not None else None
    return MotionPlan(W, str(_field(rec, "arm", where)), constraint, binding, times)


def _pose_matches(chain, q, tcp_in_object, board_pose) -> bool:
    tcp = kin.forward_kinematics(chain, q)
    want = board_pose @ tcp_in_object
    return (np.linalg.norm(tcp.p - want.p) <= POSE_TOL_POS
            and rotation_distance(tcp.R, want.R) <= POSE_TOL_ROT)


def check_board(scene, rec: dict, where: str) -> BoardCheck:
    """Replay one board's steps against ``scene`` (whose finished list must be
    the boards assembled before this one)."""
    bid = str(_field(rec, "board", where))
    steps = _field(rec, "steps", where)
    problems = []
    kinds = [s.get("kind") for s in steps]
    if kinds != list(STEP_KINDS):
        problems.append(f"step kinds {kinds} != {list(STEP_KINDS)}")
        return BoardCheck(bid, False, problems)
    for i, s in enumerate(steps):
        if s.get("object") != bid:
            problems.append(f"step {i} moves {s.get('object')!r}, expected {bid!r}")
    board = scene.board(bid)
    robot = scene.robot
    pick, rr, move, release = steps
    start = pose_from_record(_field(move, "start", f"{where}.steps[2]"), f"{where}.steps[2].start")
    end = pose_from_record(_field(move, "end", f"{where}.steps[2]"), f"{where}.steps[2].end")
    init = pose_from_record(_field(pick, "start", f"{where}.steps[0]"), f"{where}.steps[0].start")
    if not np.allclose(init.p, scene.initial_poses[bid].p, atol=1e-9):
        problems.append("suction pick does not start at the board's initial pose")
    plan = _plan_from_record(_field(move, "plan", f"{where}.steps[2]"), f"{where}.steps[2].plan")
    if plan.object_binding is None:
        problems.append("constrained move is not bound to a grasp")
        return BoardCheck(bid, False, problems)
    grasp = plan.object_binding[1]
    arm = robot.arm(plan.arm)
    # the limit must be the slip-free one for this grasp, not something looser
    lim = min(transfer_limit(board, grasp, arm, robot.pads, robot.grip_force).relaxation_limit, np.pi / 2)
    if plan.constraint.limit > lim + 1e-9:
        problems.append(f"plan limit {plan.constraint.limit:.6f} exceeds the slip-free limit {lim:.6f}")
    if plan.constraint.mode != scene.settings.inclination_mode:
        problems.append(f"plan uses inclination mode {plan.constraint.mode!r}")
    T = grasp.tcp_in_object()
    if not _pose_matches(arm.chain, plan.waypoints[0], T, start):
        problems.append("first waypoint does not hold the board at the robot-robot pose")
    if not _pose_matches(arm.chain, plan.waypoints[-1], T, end):
        problems.append("last waypoint does not hold the board at the handover pose")
    env = PlanEnv.holding(arm, transfer_obstacles(scene, bid), board, grasp)
    rep = validate_plan(plan, env)
    if not rep.ok:
        problems.append(f"plan fails validation: {rep.first_violation}")
    if len(plan.times) != len(plan.waypoints) or np.any(np.diff(plan.times) < 0):
        problems.append("timestamps are not one non-decreasing value per waypoint")
    return BoardCheck(bid, not problems, problems, rep.to_record())


def validate_trace(rec: dict, scene) -> TraceCheck:
    """Re-check every planned board of a trace against the scene it came from."""
    boards = _field(rec, "boards", "trace")
    if not isinstance(boards, list):
        raise SceneError("trace.boards: expected a list")
    problems = []
    order = [b.get("board") for b in boards]
    if order != list(scene.sequence[:len(order)]):
        problems.append(f"board order {order} does not follow the assembly sequence")
    work = replace(scene, finished=list(scene.finished))
    checks = []
    for i, b in enumerate(boards):
        if b.get("status") != "ok":
            if i != len(boards) - 1:
                problems.append(f"planning continued after board {b.get('board')!r} failed")
            break
        bid = b.get("board")
        if bid not in scene.boards:
            problems.append(f"trace names unknown board {bid!r}")
            break
        checks.append(check_board(work, b, f"trace.boards[{i}]"))
        work.finished.append((work.board(bid), work.assembly_poses[bid]))
    if rec.get("complete") and len(checks) != len(scene.sequence):
        problems.append("trace claims completion but does not cover every board")
    return TraceCheck(checks, problems)
