"""Joint-space bidirectional tree planner with an inclination constraint.

Every sampled configuration must keep the gripper inclination within the
slip-free limit and be collision-free; violating samples are discarded.
Edges are checked at a fixed interpolation step.  While planning, collision
proxies are padded and the limit is tightened slightly so that any point on
a checked edge (not just the checked points) is valid; ``validate_plan``
re-checks the result exactly at a finer resolution.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import kinematics as kin
from .collision import BoxSet, batched_any_overlap, sat_overlap
from .errors import InvalidEndpoint, PlanningFailed
from .grasping import Arm, BoardSpec, GraspCandidate, arm_boxes, grasp_geometry
from .se3 import Pose
from .slip import SlipCache, relaxation_limit

log = logging.getLogger(__name__)

HALF_PI = np.pi / 2.0
GRAVITY_DIR = np.array([0.0, 0.0, -1.0])
MODES = ("roll", "opening")


@dataclass(frozen=True)
class InclinationConstraint:
    limit: float
    mode: str = "roll"

    def __post_init__(self):
        if not 0.0 <= self.limit <= HALF_PI + 1e-12:
            raise ValueError(f"inclination limit must be in [0, pi/2], got {self.limit}")
        if self.mode not in MODES:
            raise ValueError(f"unknown inclination mode {self.mode!r}")

    @property
    def active(self) -> bool:
        return self.limit < HALF_PI


def inclination_from_rotation(R, mode: str = "roll") -> np.ndarray:
    """Inclination of TCP frame(s) ``R`` (columns: side, opening, approach).

    ``opening`` measures the opening direction against gravity, folded to
    [0, pi/2].  ``roll`` measures how far the gripper is rolled about its
    approach axis: the side axis tilting out of the horizontal plane.  Both
    agree whenever the approach is horizontal.
    """
    R = np.asarray(R, dtype=float)
    if mode == "opening":
        c = np.abs(R[..., :, 1] @ GRAVITY_DIR)
        return np.arccos(np.clip(c, 0.0, 1.0))
    if mode == "roll":
        s = np.abs(R[..., :, 0] @ GRAVITY_DIR)
        return np.arcsin(np.clip(s, 0.0, 1.0))
    raise ValueError(f"unknown inclination mode {mode!r}")


def inclinations(chain: kin.SerialChain, Q, mode: str = "roll") -> np.ndarray:
    R, _ = kin.fk_batch(chain, np.atleast_2d(Q))
    return inclination_from_rotation(R, mode)


def inclination_of(chain: kin.SerialChain, q, mode: str = "roll") -> float:
    return float(inclinations(chain, q, mode)[0])


@dataclass(eq=False)
class PlanEnv:
    """What a planning query checks against: the arm, the static boxes and an
    optional board rigidly held at the TCP."""

    arm: Arm
    obstacles: BoxSet
    held_half: np.ndarray | None = None
    held_offset: Pose | None = None     # board pose in the TCP frame

    @classmethod
    def holding(cls, arm: Arm, obstacles: BoxSet, board: BoardSpec, grasp: GraspCandidate) -> PlanEnv:
        return cls(arm, obstacles, board.half, grasp.tcp_in_object().inverse())

    def collisions(self, Q, pad: float = 0.0) -> np.ndarray:
        Q = np.atleast_2d(Q)
        Rs, ps, R_tcp, p_tcp = kin.joint_frames(self.arm.chain, Q)
        c, R, h = arm_boxes(self.arm, Rs, ps, R_tcp, p_tcp)
        h = h + pad
        hit = batched_any_overlap(c, R, h, self.obstacles)
        if self.held_half is not None:
            off = self.held_offset
            bc = p_tcp + R_tcp @ off.p
            bR = R_tcp @ off.R
            bh = np.broadcast_to(self.held_half + pad, bc.shape)
            hit |= batched_any_overlap(bc[:, None], bR[:, None], bh[:, None], self.obstacles)
            # the hand itself grips the board; the other links must stay clear
            # (the links are already padded, so the board is not)
            bh0 = np.broadcast_to(self.held_half, bc.shape)
            links = sat_overlap(c[:, :-1], R[:, :-1], h[:, :-1], bc[:, None], bR[:, None], bh0[:, None])
            hit |= links.any(axis=1)
        return hit

    def held_boxes(self, Q):
        """World OBB arrays of the held board at each configuration."""
        R_tcp, p_tcp = kin.fk_batch(self.arm.chain, np.atleast_2d(Q))
        off = self.held_offset
        return p_tcp + R_tcp @ off.p, R_tcp @ off.R


@dataclass(eq=False)
class MotionPlan:
    waypoints: np.ndarray            # (n, dof)
    arm: str
    constraint: InclinationConstraint
    object_binding: tuple | None = None    # (board id, GraspCandidate)
    times: np.ndarray = None
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.waypoints)

    def to_record(self) -> dict:
        rec = {"arm": self.arm,
               "constraint": {"limit": float(self.constraint.limit), "mode": self.constraint.mode},
               "waypoints": [[float(v) for v in q] for q in self.waypoints],
               "times": [float(t) for t in self.times]}
        if self.object_binding is not None:
            rec["object"] = self.object_binding[0]
            rec["grasp"] = self.object_binding[1].to_record()
        return rec


def timestamps(waypoints, joint_speed: float) -> np.ndarray:
    W = np.asarray(waypoints, float)
    if len(W) < 2:
        return np.zeros(len(W))
    step = np.max(np.abs(np.diff(W, axis=0)), axis=1)
    return np.concatenate([[0.0], np.cumsum(step / joint_speed)])


def densify(waypoints, max_step: float) -> np.ndarray:
    """Linear subdivision so consecutive configs differ by at most ``max_step`` (inf-norm)."""
    W = np.asarray(waypoints, float)
    out = [W[0]]
    for a, b in zip(W[:-1], W[1:]):
        n = max(1, int(np.ceil(np.max(np.abs(b - a)) / max_step - 1e-12)))
        s = np.arange(1, n + 1)[:, None] / n
        out.extend(a + s * (b - a))
    return np.array(out)


class _Checker:
    def __init__(self, env: PlanEnv, constraint: InclinationConstraint, pad: float, margin: float,
                 edge_step: float):
        self.env = env
        self.chain = env.arm.chain
        self.mode = constraint.mode
        self.bound = constraint.limit - margin if constraint.active else None
        self.pad = pad
        self.edge_step = edge_step
        self.lo = self.chain.limits[:, 0]
        self.hi = self.chain.limits[:, 1]
        self.checks = 0

    def valid(self, Q) -> np.ndarray:
        Q = np.atleast_2d(Q)
        self.checks += len(Q)
        ok = np.all((Q >= self.lo) & (Q <= self.hi), axis=1)
        if self.bound is not None:
            ok &= inclinations(self.chain, Q, self.mode) <= self.bound
        if ok.any():
            idx = np.nonzero(ok)[0]
            ok[idx] = ~self.env.collisions(Q[idx], self.pad)
        return ok

    def edge_points(self, a, b) -> np.ndarray:
        n = max(1, int(np.ceil(np.sum(np.abs(b - a)) / self.edge_step - 1e-12)))
        s = np.arange(1, n + 1)[:, None] / n
        return a + s * (b - a)

    def edge_ok(self, a, b) -> bool:
        return bool(self.valid(self.edge_points(a, b)).all())


class _Tree:
    def __init__(self, root, cap: int = 1024):
        self.nodes = np.empty((cap, root.size))
        self.parent = np.empty(cap, dtype=int)
        self.nodes[0] = root
        self.parent[0] = -1
        self.n = 1

    def add(self, q, parent: int) -> int:
        if self.n == len(self.nodes):
            self.nodes = np.concatenate([self.nodes, np.empty_like(self.nodes)])
            self.parent = np.concatenate([self.parent, np.empty_like(self.parent)])
        self.nodes[self.n] = q
        self.parent[self.n] = parent
        self.n += 1
        return self.n - 1

    def nearest(self, q) -> int:
        d = np.sum((self.nodes[:self.n] - q) ** 2, axis=1)
        return int(np.argmin(d))

    def path_to_root(self, i: int) -> list:
        out = []
        while i >= 0:
            out.append(self.nodes[i].copy())
            i = int(self.parent[i])
        return out


def _steer(a, b, step: float):
    d = b - a
    n = np.linalg.norm(d)
    if n <= step:
        return b.copy(), True
    return a + d * (step / n), False


def plan_constrained(chain_or_arm, start, goal, constraint: InclinationConstraint, env: PlanEnv,
                     seed: int = 0, budget_s: float = 30.0, *, edge_step: float = 0.02,
                     extend_step: float = 0.25, shortcut_attempts: int = 200,
                     max_waypoint_step: float = 0.05, joint_speed: float = 0.5,
                     margin: float = 0.01, pad: float = 0.015,
                     object_binding: tuple | None = None) -> MotionPlan:
    arm = chain_or_arm if isinstance(chain_or_arm, Arm) else env.arm
    chain = arm.chain
    start = np.asarray(start, float)
    goal = np.asarray(goal, float)
    if start.shape != (chain.dof,) or goal.shape != (chain.dof,):
        raise ValueError("start/goal dimension does not match the chain")
    # a constraint at pi/2 is no constraint, so no margin is needed there
    margin = margin if constraint.active else 0.0
    chk = _Checker(env, constraint, pad, margin, edge_step)
    ends = chk.valid(np.stack([start, goal]))
    if not ends[0]:
        raise InvalidEndpoint("start configuration violates limits, inclination or clearance")
    if not ends[1]:
        raise InvalidEndpoint("goal configuration violates limits, inclination or clearance")

    def finish(path, stats):
        W = densify(path, max_waypoint_step) if len(path) > 1 else np.asarray(path)
        stats["checks"] = chk.checks
        return MotionPlan(W, arm.owner, constraint, object_binding, timestamps(W, joint_speed), stats)

    if np.array_equal(start, goal):
        return finish([start], {"iterations": 0})
    rng = np.random.default_rng(seed)
    t0 = time.monotonic()
    if chk.edge_ok(start, goal):
        return finish([start, goal], {"iterations": 0})

    ta, tb = _Tree(start), _Tree(goal)
    a_is_start = True
    it = 0
    pool = np.empty((0, chain.dof))
    path = None
    while time.monotonic() - t0 < budget_s:
        it += 1
        if len(pool) == 0:
            cand = rng.uniform(chk.lo, chk.hi, size=(64, chain.dof))
            pool = cand[chk.valid(cand)]
            continue
        target, pool = pool[0], pool[1:]
        # extend tree a one step toward the sample
        ia = ta.nearest(target)
        q_new, _ = _steer(ta.nodes[ia], target, extend_step)
        if not chk.edge_ok(ta.nodes[ia], q_new):
            ta, tb, a_is_start = tb, ta, not a_is_start
            continue
        na = ta.add(q_new, ia)
        # connect tree b greedily toward the new node
        ib = tb.nearest(q_new)
        while True:
            q_next, reached = _steer(tb.nodes[ib], q_new, extend_step)
            if not chk.edge_ok(tb.nodes[ib], q_next):
                break
            ib = tb.add(q_next, ib)
            if reached:
                pa = ta.path_to_root(na)[::-1]
                pb = tb.path_to_root(ib)[1:]
                path = pa + pb if a_is_start else (pa + pb)[::-1]
                break
        if path is not None:
            break
        ta, tb, a_is_start = tb, ta, not a_is_start
    if path is None:
        raise PlanningFailed(f"no path within {budget_s:g} s ({it} iterations)")
    path = _shortcut(path, chk, rng, shortcut_attempts)
    return finish(path, {"iterations": it, "seconds": time.monotonic() - t0})


def _shortcut(path: list, chk: _Checker, rng, attempts: int) -> list:
    path = list(path)
    for _ in range(attempts):
        if len(path) <= 2:
            break
        i, j = sorted(rng.choice(len(path), size=2, replace=False))
        if j - i < 2:
            continue
        if chk.edge_ok(path[i], path[j]):
            path = path[:i + 1] + path[j:]
    return path


@dataclass
class ValidationReport:
    limits_ok: bool = True
    constraint_ok: bool = True
    collision_ok: bool = True
    first_violation: dict | None = None
    checked: int = 0
    max_inclination: float = 0.0

    @property
    def ok(self) -> bool:
        return self.limits_ok and self.constraint_ok and self.collision_ok

    def to_record(self) -> dict:
        return {"ok": self.ok, "limits_ok": self.limits_ok, "constraint_ok": self.constraint_ok,
                "collision_ok": self.collision_ok, "first_violation": self.first_violation,
                "checked": self.checked, "max_inclination": self.max_inclination}


def dense_path(waypoints, resolution: float) -> tuple[np.ndarray, np.ndarray]:
    """Interpolants at ``resolution`` (inf-norm) with their path parameter
    (segment index plus fraction)."""
    W = np.asarray(waypoints, float)
    if len(W) == 1:
        return W.copy(), np.zeros(1)
    pts, params = [W[:1]], [np.zeros(1)]
    for k, (a, b) in enumerate(zip(W[:-1], W[1:])):
        n = max(1, int(np.ceil(np.max(np.abs(b - a)) / resolution - 1e-12)))
        s = np.arange(1, n + 1) / n
        pts.append(a + s[:, None] * (b - a))
        params.append(k + s)
    return np.concatenate(pts), np.concatenate(params)


def validate_plan(plan: MotionPlan, env: PlanEnv, resolution: float = 0.01,
                  tol: float = 1e-6) -> ValidationReport:
    rep = ValidationReport()
    chain = env.arm.chain
    Q, s = dense_path(plan.waypoints, resolution)
    rep.checked = len(Q)
    lo, hi = chain.limits[:, 0], chain.limits[:, 1]
    bad_lim = ~np.all((Q >= lo - tol) & (Q <= hi + tol), axis=1)
    inc = inclinations(chain, Q, plan.constraint.mode)
    rep.max_inclination = float(inc.max())
    bad_inc = inc > plan.constraint.limit + tol
    bad_col = env.collisions(Q, 0.0)
    for name, bad, attr in (("limits", bad_lim, "limits_ok"), ("inclination", bad_inc, "constraint_ok"),
                            ("collision", bad_col, "collision_ok")):
        if bad.any():
            setattr(rep, attr, False)
            i = int(np.argmax(bad))
            v = {"check": name, "parameter": float(s[i]), "config": [float(x) for x in Q[i]]}
            if name == "inclination":
                v["value"] = float(inc[i])
            if rep.first_violation is None or v["parameter"] < rep.first_violation["parameter"]:
                rep.first_violation = v
    return rep


_SLIP_CACHE = SlipCache()


def transfer_limit(board: BoardSpec, grasp: GraspCandidate, arm: Arm, pads, P: float,
                   cache: SlipCache | None = None):
    cache = _SLIP_CACHE if cache is None else cache
    key = (board.id, board.length, board.width, board.mass, grasp.key, arm.effector.ee_length,
           pads, float(P))
    return cache.get(key, lambda: relaxation_limit(grasp_geometry(board, grasp, arm.effector.ee_length),
                                                   pads, P))


def grasp_ik(arm: Arm, board_pose: Pose, grasp: GraspCandidate, seeds=None) -> np.ndarray:
    """IK for ``arm`` holding the board at ``board_pose`` with ``grasp``."""
    target = board_pose @ grasp.tcp_in_object()
    chain = arm.chain
    seeds = chain.ik_seeds if seeds is None else np.atleast_2d(seeds)
    res = kin.ik_batch(chain, np.repeat(target.R[None], len(seeds), 0),
                       np.repeat(target.p[None], len(seeds), 0), seeds)
    if not res.success.any():
        raise InvalidEndpoint(f"no IK solution for {arm.owner} at the requested board pose")
    return res.q[int(np.argmax(res.success))]


def plan_object_transfer(arm: Arm, board: BoardSpec, grasp: GraspCandidate, start_pose: Pose,
                         goal_pose: Pose, obstacles: BoxSet, pad_params, P: float, *, settings=None,
                         seed: int = 0, q_start=None, q_goal=None, budget_s=None) -> MotionPlan:
    from .workcell import Settings
    st = settings or Settings()
    analysis = transfer_limit(board, grasp, arm, pad_params, P)
    constraint = InclinationConstraint(min(analysis.relaxation_limit, HALF_PI), st.inclination_mode)
    qs = grasp_ik(arm, start_pose, grasp) if q_start is None else np.asarray(q_start, float)
    qg = grasp_ik(arm, goal_pose, grasp) if q_goal is None else np.asarray(q_goal, float)
    env = PlanEnv.holding(arm, obstacles, board, grasp)
    plan = plan_constrained(arm, qs, qg, constraint, env, seed=seed,
                            budget_s=st.budget_s if budget_s is None else budget_s,
                            edge_step=st.edge_step, extend_step=st.extend_step,
                            shortcut_attempts=st.shortcut_attempts,
                            max_waypoint_step=st.max_waypoint_step, joint_speed=st.joint_speed,
                            margin=st.constraint_margin, pad=st.collision_pad,
                            object_binding=(board.id, grasp))
    plan.stats["slip"] = analysis
    plan.stats["env"] = env
    return plan
