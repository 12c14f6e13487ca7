"""Human comfort: inverse condition number, goal-pose sampling and ranking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kinematics as kin
from .collision import BoxSet, sat_overlap
from .errors import SamplingExhausted
from .grasping import BoardSpec, GraspCandidate, check_human_grasp_stability, feasible_grasps_batch, generate_candidates
from .se3 import Pose, _as_rng, sample_poses_near

DEFAULT_MAX_ROT = np.radians(45.0)
DEFAULT_MAX_TRANS = 0.5


@dataclass(frozen=True)
class ComfortScore:
    value: float
    grasp: GraspCandidate
    human_config: np.ndarray


@dataclass(eq=False)
class GoalPoseCandidate:
    pose: Pose
    best_score: ComfortScore
    all_scores: list
    index: int = 0        # position in the sampled list


class GoalSamples(list):
    """Accepted poses plus rejection bookkeeping."""

    attempts: int = 0
    rejected: int = 0


def comfort_from_jacobian(J) -> float:
    s = np.linalg.svd(np.asarray(J, dtype=float), compute_uv=False)
    if s[0] <= 0.0:
        return 0.0
    return float(s[-1] / s[0])


def comfort_scores(chain: kin.SerialChain, Q) -> np.ndarray:
    """Vectorised sigma_min / sigma_max over a batch of configurations."""
    J = kin.jacobian_batch(chain, np.atleast_2d(Q))
    s = np.linalg.svd(J, compute_uv=False)
    out = np.zeros(s.shape[0])
    nz = s[:, 0] > 0
    out[nz] = s[nz, -1] / s[nz, 0]
    return out


def comfort_score(human_arm: kin.SerialChain, q) -> float:
    return comfort_from_jacobian(kin.jacobian(human_arm, q))


def _as_boxset(meshes) -> BoxSet:
    if meshes is None:
        return BoxSet.of([])
    if isinstance(meshes, BoxSet):
        return meshes
    return BoxSet.of(list(meshes))


def board_hits(board: BoardSpec, poses: list, obstacles: BoxSet) -> np.ndarray:
    """Whether the board at each pose intersects any obstacle box."""
    if not poses:
        return np.zeros(0, dtype=bool)
    if len(obstacles) == 0:
        return np.zeros(len(poses), dtype=bool)
    c = np.stack([p.p for p in poses])
    R = np.stack([p.R for p in poses])
    hit = sat_overlap(c[:, None], R[:, None], board.half, obstacles.centers[None],
                      obstacles.Rs[None], obstacles.halves[None])
    return hit.any(axis=1)


SAMPLE_BATCH = 64


def sample_goal_poses(board: BoardSpec, assembly_goal: Pose, finished_meshes, n: int, seed=0,
                      max_rot: float = DEFAULT_MAX_ROT, max_trans: float = DEFAULT_MAX_TRANS) -> GoalSamples:
    """Rejection-sample ``n`` board poses near the assembly goal.

    A pose is accepted when it is within the rotation and translation bounds
    and the board there does not intersect any of ``finished_meshes``.  The
    search gives up after ``10 * n`` consecutive rejections.  Draws come in
    fixed-size batches, so the raw stream depends only on the seed and a
    larger obstacle set can only raise the rejection count.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    rng = _as_rng(seed)
    obstacles = _as_boxset(finished_meshes)
    out = GoalSamples()
    budget = 10 * n
    streak = 0
    while len(out) < n:
        batch = sample_poses_near(assembly_goal, max_rot, max_trans, SAMPLE_BATCH, rng)
        hits = board_hits(board, batch, obstacles)
        for pose, hit in zip(batch, hits):
            out.attempts += 1
            if hit:
                out.rejected += 1
                streak += 1
                if streak >= budget:
                    raise SamplingExhausted(
                        f"board {board.id}: {streak} consecutive samples intersect the assembly "
                        f"({len(out)}/{n} accepted)")
                continue
            streak = 0
            out.append(pose)
            if len(out) == n:
                break
    return out


def score_human_grasps(board: BoardSpec, poses: list, human, obstacles=None,
                       spacing: float = 0.05) -> list[list[ComfortScore]]:
    """Stable, IK-feasible human grasps with their comfort scores, per pose."""
    obstacles = _as_boxset(obstacles)
    per_pose: list[list[ComfortScore]] = [[] for _ in poses]
    for arm in human.arms:
        cands = generate_candidates(board, arm.owner, spacing, arm.effector.max_opening)
        sets = feasible_grasps_batch(board, poses, cands, arm, obstacles)
        for i, gs in enumerate(sets):
            if not gs.grasps:
                continue
            stable = [(g, q) for g, q in gs.grasps
                      if check_human_grasp_stability(g, board, poses[i], human.pads, human.grip_force)]
            if not stable:
                continue
            vals = comfort_scores(arm.chain, np.stack([q for _, q in stable]))
            per_pose[i].extend(ComfortScore(float(v), g, q) for (g, q), v in zip(stable, vals))
    return per_pose


def rank_goal_poses(board: BoardSpec, poses: list, human, obstacles=None,
                    spacing: float = 0.05) -> list[GoalPoseCandidate]:
    if not poses:
        raise ValueError("need at least one pose to rank")
    scored = score_human_grasps(board, list(poses), human, obstacles, spacing)
    out = []
    for i, (pose, scores) in enumerate(zip(poses, scored)):
        if not scores:
            continue
        # first maximum wins so the choice is independent of arm iteration details
        best = max(scores, key=lambda s: s.value)
        out.append(GoalPoseCandidate(pose, best, scores, i))
    out.sort(key=lambda c: -c.best_score.value)
    return out
