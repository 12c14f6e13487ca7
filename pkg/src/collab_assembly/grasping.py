"""Antipodal pinch grasps on cuboid boards, feasibility filtering, shared grasps."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kinematics as kin
from .collision import OBB, BoxSet, batched_any_overlap, box_mesh, is_watertight, sat_overlap, segment_boxes
from .contact import ContactState, SoftFingerParams, soft_finger_satisfied
from .se3 import Pose, rotation_distance
from .slip import GRAVITY, GraspGeometry, plate_geometry

log = logging.getLogger(__name__)

OWNERS = ("robot-left", "robot-right", "human-left", "human-right")
DEFAULT_SPACING = 0.05
ROBOT_MAX_OPENING = 0.085
HUMAN_MAX_OPENING = 0.12

# approach directions in the board plane, in generation order
_APPROACHES = ((1.0, 0.0, 0.0), (-1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, -1.0, 0.0))
_OPENING = (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class BoardSpec:
    id: str
    length: float
    width: float
    thickness: float
    mass: float
    kind: str = ""
    vertices: np.ndarray = field(default=None, repr=False, compare=False)
    faces: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not (self.length >= self.width >= self.thickness > 0):
            raise ValueError(f"board {self.id}: need length >= width >= thickness > 0")
        if self.mass < 0:
            raise ValueError(f"board {self.id}: mass must be non-negative")
        if self.vertices is None:
            V, F = box_mesh(self.half)
            object.__setattr__(self, "vertices", V)
            object.__setattr__(self, "faces", F)
        if not is_watertight(self.faces):
            raise ValueError(f"board {self.id}: mesh is not watertight")

    @property
    def half(self) -> np.ndarray:
        return np.array([self.length, self.width, self.thickness]) / 2.0

    def obb(self, pose: Pose) -> OBB:
        return OBB(pose.p.copy(), pose.R.copy(), self.half, self.id)

    def same_shape(self, other: BoardSpec) -> bool:
        return np.allclose(self.half, other.half) and self.mass == other.mass


@dataclass(frozen=True)
class GraspCandidate:
    owner: str
    contact_center: tuple
    approach: tuple
    opening_dir: tuple
    width: float
    axis_tag: str
    index: int = 0

    @property
    def key(self) -> tuple:
        """Object-frame identity, independent of owner and generation order."""
        return (self.contact_center, self.approach, self.opening_dir)

    def tcp_in_object(self) -> Pose:
        a = np.array(self.approach)
        o = np.array(self.opening_dir)
        return Pose(np.array(self.contact_center), np.column_stack([np.cross(o, a), o, a]))

    def to_record(self) -> dict:
        return {"owner": self.owner, "index": self.index,
                "contact_center": list(self.contact_center), "approach": list(self.approach),
                "opening_dir": list(self.opening_dir), "width": self.width,
                "axis_tag": self.axis_tag}

    @classmethod
    def from_record(cls, rec: dict) -> GraspCandidate:
        return cls(rec["owner"], tuple(float(v) for v in rec["contact_center"]),
                   tuple(float(v) for v in rec["approach"]),
                   tuple(float(v) for v in rec["opening_dir"]), float(rec["width"]),
                   rec["axis_tag"], int(rec.get("index", 0)))


class CandidateList(list):
    """List of candidates; ``warning`` is set when the board cannot be pinched."""

    warning: str | None = None


@dataclass(frozen=True)
class EndEffector:
    """Pinch hand geometry.  The palm box sits behind the finger pads along -approach."""

    max_opening: float
    finger_length: float     # TCP back to the palm face, m (pad region, excluded from checks)
    palm_depth: float        # palm extent along the approach, m
    palm_width: float        # extent along the opening direction, m
    palm_thickness: float    # extent along the third axis, m
    ee_length: float         # wrist reference to the finger contact, m

    def palm_box_tcp(self) -> OBB:
        """Palm OBB in the TCP frame (x: side, y: opening, z: approach)."""
        center = np.array([0.0, 0.0, -(self.finger_length + self.palm_depth / 2.0)])
        half = np.array([self.palm_thickness, self.palm_width, self.palm_depth]) / 2.0
        return OBB(center, np.eye(3), half, "palm")


ROBOT_GRIPPER = EndEffector(ROBOT_MAX_OPENING, 0.04, 0.16, 0.09, 0.06, 0.20)
HUMAN_HAND = EndEffector(HUMAN_MAX_OPENING, 0.05, 0.03, 0.09, 0.04, 0.08)


@dataclass(eq=False)
class Arm:
    owner: str
    chain: kin.SerialChain
    effector: EndEffector

    def __post_init__(self):
        if self.owner not in OWNERS:
            raise ValueError(f"unknown owner {self.owner!r}")

    @property
    def is_human(self) -> bool:
        return self.owner.startswith("human")


def grid_positions(extent: float, spacing: float) -> np.ndarray:
    n = max(1, int(np.floor(extent / spacing + 1e-9)))
    return -extent / 2.0 + (np.arange(n) + 0.5) * extent / n


def generate_candidates(board: BoardSpec, owner: str, spacing: float = DEFAULT_SPACING,
                        max_opening: float | None = None) -> CandidateList:
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    if max_opening is None:
        max_opening = HUMAN_MAX_OPENING if owner.startswith("human") else ROBOT_MAX_OPENING
    out = CandidateList()
    if board.thickness > max_opening:
        out.warning = (f"board {board.id} thickness {board.thickness} m exceeds the "
                       f"{owner} opening {max_opening} m")
        log.warning(out.warning)
        return out
    idx = 0
    for x in grid_positions(board.length, spacing):
        for y in grid_positions(board.width, spacing):
            for a in _APPROACHES:
                tag = "longitudinal" if a[0] != 0.0 else "transverse"
                out.append(GraspCandidate(owner, (float(x), float(y), 0.0), a, _OPENING,
                                          float(board.thickness), tag, idx))
                idx += 1
    return out


@lru_cache(maxsize=256)
def _palm_clear_mask(half: tuple, effector: EndEffector, keys: tuple) -> np.ndarray:
    """Pose-independent filter: does the palm stay clear of the board it grasps?"""
    palm = effector.palm_box_tcp()
    ok = np.empty(len(keys), dtype=bool)
    board_half = np.array(half)
    for i, (c, a, o) in enumerate(keys):
        a = np.array(a)
        o = np.array(o)
        R = np.column_stack([np.cross(o, a), o, a])
        center = R @ palm.center + np.array(c)
        ok[i] = not sat_overlap(np.zeros(3), np.eye(3), board_half, center, R, palm.half)
    return ok


def palm_clear(board: BoardSpec, effector: EndEffector, candidates) -> np.ndarray:
    keys = tuple(c.key for c in candidates)
    return _palm_clear_mask(tuple(board.half.tolist()), effector, keys)


def arm_boxes(arm: Arm, Rs, ps, R_tcp, p_tcp):
    """Collision proxies for a batch of configurations.

    Returns ``(centers, Rs, halves)`` shaped ``(N, m, ...)``; the palm is
    the last box.
    """
    chain = arm.chain
    pts = ps  # (N, k+1, 3): joint origins then flange
    idx = np.nonzero(chain.link_collides)[0]
    c, R, h = segment_boxes(pts[:, idx], pts[:, idx + 1], chain.link_radii[idx])
    palm = arm.effector.palm_box_tcp()
    pc = p_tcp + R_tcp @ palm.center
    pR = R_tcp @ palm.R
    ph = np.broadcast_to(palm.half, pc.shape)
    return (np.concatenate([c, pc[:, None]], axis=1),
            np.concatenate([R, pR[:, None]], axis=1),
            np.concatenate([h, ph[:, None]], axis=1))


def arm_collides(arm: Arm, Q, obstacles: BoxSet, held: BoxSet | None = None,
                 pad: float = 0.0) -> np.ndarray:
    """Per-configuration collision flag against obstacles (and a held board,
    which only the non-hand links may not touch)."""
    Q = np.atleast_2d(Q)
    Rs, ps, R_tcp, p_tcp = kin.joint_frames(arm.chain, Q)
    c, R, h = arm_boxes(arm, Rs, ps, R_tcp, p_tcp)
    h = h + pad
    hit = batched_any_overlap(c, R, h, obstacles)
    if held is not None and len(held):
        hit |= batched_any_overlap(c[:, :-1], R[:, :-1], h[:, :-1], held)
    return hit


@dataclass(eq=False)
class GraspSet:
    object_pose: Pose
    grasps: list              # [(GraspCandidate, joint config)]
    board_id: str = ""
    owner: str = ""

    def candidates(self) -> list:
        return [g for g, _ in self.grasps]

    def keys(self) -> list:
        return [g.key for g, _ in self.grasps]

    def __len__(self):
        return len(self.grasps)

    def revalidate(self, board: BoardSpec, arm: Arm, obstacles: BoxSet,
                   tol_pos: float = 1e-4, tol_rot: float = 1e-3) -> list[bool]:
        """Independent re-check of every member: FK error and collision."""
        out = []
        held = BoxSet.of([board.obb(self.object_pose)])
        for g, q in self.grasps:
            want = self.object_pose @ g.tcp_in_object()
            got = kin.forward_kinematics(arm.chain, q)
            ok = (np.linalg.norm(want.p - got.p) < tol_pos
                  and rotation_distance(want.R, got.R) < tol_rot
                  and arm.chain.within_limits(q)
                  and not arm_collides(arm, q, obstacles, held)[0])
            out.append(bool(ok))
        return out


def feasible_grasps_batch(board: BoardSpec, poses: list, candidates, arm: Arm,
                          obstacles: BoxSet, seeds=None, extra=None, pad: float = 0.0) -> list[GraspSet]:
    """Feasible grasps of ``arm`` at each of several board poses, solved in one batch.

    ``extra`` optionally gives one more obstacle BoxSet per pose.  ``pad``
    inflates the arm proxies so the solutions keep that much clearance.
    """
    candidates = list(candidates)
    sets = [GraspSet(p, [], board.id, arm.owner) for p in poses]
    if not candidates or not poses:
        return sets
    clear = palm_clear(board, arm.effector, candidates)
    cand_idx = np.nonzero(clear & np.array([c.width <= arm.effector.max_opening for c in candidates]))[0]
    if cand_idx.size == 0:
        return sets
    tcp_local = [candidates[i].tcp_in_object() for i in cand_idx]
    Lp = np.stack([t.p for t in tcp_local])
    LR = np.stack([t.R for t in tcp_local])
    Pp = np.stack([p.p for p in poses])
    PR = np.stack([p.R for p in poses])
    # all (pose, candidate) targets in world frame
    tgt_p = (Pp[:, None] + np.einsum("pij,cj->pci", PR, Lp)).reshape(-1, 3)
    tgt_R = np.einsum("pij,cjk->pcik", PR, LR).reshape(-1, 3, 3)
    pose_of = np.repeat(np.arange(len(poses)), cand_idx.size)
    cand_of = np.tile(cand_idx, len(poses))
    chain = arm.chain
    reach_ok = np.linalg.norm(tgt_p - chain.base.p, axis=1) <= chain.reach
    seeds = chain.ik_seeds if seeds is None else np.atleast_2d(seeds)
    solved_q = np.full((tgt_p.shape[0], chain.dof), np.nan)
    pending = np.nonzero(reach_ok)[0]
    held_boxes = [BoxSet.of([board.obb(p)]) for p in poses]
    # every seed is solved in one batch (members are independent, and one large
    # batch is far cheaper than several small ones); seeds are then taken in order
    reach_idx = pending
    n_t = reach_idx.size
    if n_t == 0:
        return sets
    res = kin.ik_batch(chain, np.tile(tgt_R[reach_idx], (len(seeds), 1, 1)),
                       np.tile(tgt_p[reach_idx], (len(seeds), 1)), np.repeat(seeds, n_t, axis=0))
    for j in range(len(seeds)):
        if pending.size == 0:
            break
        sl = slice(j * n_t, (j + 1) * n_t)
        ok_j = res.success[sl] & np.isin(reach_idx, pending)
        conv = reach_idx[ok_j]
        qs = res.q[sl][ok_j]
        if conv.size:
            ok = np.ones(conv.size, dtype=bool)
            hit = arm_collides(arm, qs, obstacles, pad=pad)
            ok &= ~hit
            # links other than the hand must also clear the held board
            for pi in np.unique(pose_of[conv]):
                m = pose_of[conv] == pi
                more = extra[pi] if extra is not None and extra[pi] is not None else BoxSet.of([])
                ok[m] &= ~arm_collides(arm, qs[m], more, held_boxes[pi], pad=pad)
            solved_q[conv[ok]] = qs[ok]
            done = conv[ok]
            pending = np.setdiff1d(pending, done, assume_unique=True)
    for t in np.nonzero(~np.isnan(solved_q[:, 0]))[0]:
        sets[pose_of[t]].grasps.append((candidates[cand_of[t]], solved_q[t]))
    return sets


def feasible_grasps(board: BoardSpec, pose: Pose, candidates, arm: Arm, obstacles: BoxSet,
                    seeds=None, pad: float = 0.0) -> GraspSet:
    return feasible_grasps_batch(board, [pose], candidates, arm, obstacles, seeds, pad=pad)[0]


def shared_grasps(set_a: GraspSet, set_b: GraspSet) -> list:
    if set_a.owner != set_b.owner:
        raise ValueError(f"owner mismatch: {set_a.owner} vs {set_b.owner}")
    if set_a.board_id != set_b.board_id:
        raise ValueError(f"board mismatch: {set_a.board_id} vs {set_b.board_id}")
    keys_b = set(set_b.keys())
    return [g for g, _ in set_a.grasps if g.key in keys_b]


def grasp_geometry(board: BoardSpec, grasp: GraspCandidate, ee_length: float) -> GraspGeometry:
    return plate_geometry(board.length, board.width, board.mass, grasp.contact_center[:2], ee_length)


def grasp_wrench(grasp: GraspCandidate, board: BoardSpec, pose: Pose):
    """Gravity load of the board at ``pose`` resolved at the grasp contact.

    Returns ``(normal, tangential, moment_about_normal)`` magnitudes for the
    whole grasp (both pads together).
    """
    tcp = pose @ grasp.tcp_in_object()
    o = tcp.R[:, 1]
    F = np.array([0.0, 0.0, -board.mass * GRAVITY])
    r = pose.p - tcp.p
    tau = np.cross(r, F)
    f_n = abs(float(F @ o))
    f_t = float(np.linalg.norm(F - (F @ o) * o))
    tau_n = abs(float(tau @ o))
    return f_n, f_t, tau_n


def check_human_grasp_stability(grasp: GraspCandidate, board: BoardSpec, pose: Pose,
                                params: SoftFingerParams, P: float) -> bool:
    """Soft-finger check of the worse of the two pads.

    Friction force and moment are shared evenly; the weight component along
    the pinch axis unloads one pad, which is therefore the worst one.
    """
    if not grasp.owner.startswith("human"):
        raise ValueError("stability check is defined for human grasps")
    f_n, f_t, tau_n = grasp_wrench(grasp, board, pose)
    P_worst = P - f_n / 2.0
    if P_worst <= 0:
        return False
    ok, _ = soft_finger_satisfied(ContactState(f_t / 2.0, tau_n / 2.0, P_worst), params)
    return ok
