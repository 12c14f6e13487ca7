"""Serial-chain kinematics: FK, geometric Jacobian, damped least-squares IK.

All heavy routines work on batches of configurations (shape ``(N, k)``);
single-configuration wrappers sit on top.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import OutOfLimits, SceneError, Unreachable
from .records import parse_angle, parse_float, parse_vector, pose_from_record
from .se3 import Pose, rotvecs

TWO_PI = 2.0 * np.pi

IK_DAMPING = 0.01
IK_STEP_CLAMP = 0.2
IK_MAX_ITER = 300
# (iteration, position error, rotation error): targets still farther off
# than this are treated as stalled and abandoned early
IK_STALL_GATES = ((60, 0.05, 0.5), (150, 5e-3, 0.05))
# every IK_PROGRESS_WINDOW iterations the error must shrink to this fraction
IK_PROGRESS_WINDOW = 10
IK_PROGRESS_RATIO = 0.9
IK_TOL_POS = 1e-5
IK_TOL_ROT = 1e-4


def _skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(eq=False)
class SerialChain:
    name: str
    joint_names: list[str]
    origins: list[Pose]            # fixed transform from previous joint frame
    axes: np.ndarray               # (k, 3) unit axes in the joint frame
    limits: np.ndarray             # (k, 2) radians
    base: Pose = field(default_factory=Pose.identity)
    flange_to_tcp: Pose = field(default_factory=Pose.identity)
    link_radii: np.ndarray | None = None   # collision proxy radius per link
    link_collides: np.ndarray | None = None
    ik_seeds: np.ndarray | None = None

    def __post_init__(self):
        k = len(self.joint_names)
        if not 1 <= k <= 10:
            raise SceneError(f"chain {self.name}: joint count {k} outside [1, 10]")
        self.axes = np.asarray(self.axes, dtype=float).reshape(k, 3)
        self.axes = self.axes / np.linalg.norm(self.axes, axis=1, keepdims=True)
        self.limits = np.asarray(self.limits, dtype=float).reshape(k, 2)
        bad = np.nonzero(self.limits[:, 0] >= self.limits[:, 1])[0]
        if bad.size:
            raise SceneError(f"chain {self.name}: joint {self.joint_names[bad[0]]} has min >= max")
        if self.link_radii is None:
            self.link_radii = np.full(k, 0.04)
        if self.link_collides is None:
            self.link_collides = np.ones(k, dtype=bool)
        self.link_radii = np.asarray(self.link_radii, dtype=float)
        self.link_collides = np.asarray(self.link_collides, dtype=bool)
        if self.ik_seeds is None:
            self.ik_seeds = np.clip(np.zeros((1, k)), self.limits[:, 0], self.limits[:, 1])
        self.ik_seeds = np.atleast_2d(np.asarray(self.ik_seeds, dtype=float))
        self._oR = np.stack([o.R for o in self.origins])
        self._op = np.stack([o.p for o in self.origins])
        self._K = np.stack([_skew(a) for a in self.axes])
        self._K2 = self._K @ self._K
        self._wrap = (self.limits[:, 1] - self.limits[:, 0]) >= TWO_PI - 1e-12
        self.home = forward_kinematics(self, np.zeros(k)) if self.within_limits(np.zeros(k)) else None
        self.reach = float(sum(np.linalg.norm(o.p) for o in self.origins[1:])
                           + np.linalg.norm(self.flange_to_tcp.p))

    @property
    def dof(self) -> int:
        return len(self.joint_names)

    def within_limits(self, q, tol: float = 1e-12) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.limits[:, 0] - tol) and np.all(q <= self.limits[:, 1] + tol))

    def with_base(self, base: Pose) -> SerialChain:
        return SerialChain(self.name, list(self.joint_names), list(self.origins), self.axes.copy(),
                           self.limits.copy(), base, self.flange_to_tcp, self.link_radii.copy(),
                           self.link_collides.copy(), self.ik_seeds.copy())

    def random_config(self, rng) -> np.ndarray:
        return rng.uniform(self.limits[:, 0], self.limits[:, 1])


def _check_dims(chain: SerialChain, Q: np.ndarray) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    if Q.shape[-1] != chain.dof:
        raise ValueError(f"chain {chain.name} has {chain.dof} joints, got configuration of "
                         f"length {Q.shape[-1]}")
    return Q


def joint_frames(chain: SerialChain, Q):
    """Batched FK.

    Returns ``(Rj, pj, R_tcp, p_tcp)`` where ``Rj, pj`` have shape
    ``(N, k+1, ...)``: entry i < k is joint i's frame (before its own
    rotation), entry k is the flange.
    """
    Q = np.atleast_2d(_check_dims(chain, Q))
    n, k = Q.shape
    R = np.broadcast_to(chain.base.R, (n, 3, 3)).copy()
    p = np.broadcast_to(chain.base.p, (n, 3)).copy()
    Rs = np.empty((n, k + 1, 3, 3))
    ps = np.empty((n, k + 1, 3))
    s = np.sin(Q)
    c = np.cos(Q)
    # products with constant 3x3 factors go through one 2-D matmul, which is
    # much faster than numpy's stacked small-matrix path
    for i in range(k):
        p = p + R @ chain._op[i]
        R = (R.reshape(-1, 3) @ chain._oR[i]).reshape(n, 3, 3)
        Rs[:, i] = R
        ps[:, i] = p
        RK = (R.reshape(-1, 3) @ chain._K[i]).reshape(n, 3, 3)
        RK2 = (R.reshape(-1, 3) @ chain._K2[i]).reshape(n, 3, 3)
        R = R + s[:, i, None, None] * RK + (1.0 - c[:, i, None, None]) * RK2
    Rs[:, k] = R
    ps[:, k] = p
    t = chain.flange_to_tcp
    p_tcp = p + R @ t.p
    R_tcp = R @ t.R
    return Rs, ps, R_tcp, p_tcp


def fk_batch(chain: SerialChain, Q):
    _, _, R, p = joint_frames(chain, Q)
    return R, p


def forward_kinematics(chain: SerialChain, q) -> Pose:
    q = _check_dims(chain, q)
    if q.ndim != 1:
        raise ValueError("forward_kinematics expects a single configuration")
    R, p = fk_batch(chain, q[None])
    return Pose(p[0], R[0])


def _jacobian_from_frames(chain, Rs, ps, p_tcp):
    z = (Rs[:, :-1] @ chain.axes[:, :, None])[..., 0]
    r = p_tcp[:, None, :] - ps[:, :-1]
    J = np.empty((Rs.shape[0], 6, chain.dof))
    zx, zy, zz = z[..., 0], z[..., 1], z[..., 2]
    rx, ry, rz = r[..., 0], r[..., 1], r[..., 2]
    J[:, 0] = zy * rz - zz * ry
    J[:, 1] = zz * rx - zx * rz
    J[:, 2] = zx * ry - zy * rx
    J[:, 3:] = z.transpose(0, 2, 1)
    return J


def jacobian_batch(chain: SerialChain, Q) -> np.ndarray:
    Rs, ps, _, p_tcp = joint_frames(chain, Q)
    return _jacobian_from_frames(chain, Rs, ps, p_tcp)


def jacobian(chain: SerialChain, q) -> np.ndarray:
    """Geometric 6xk Jacobian at the TCP: linear rows first, then angular."""
    q = _check_dims(chain, q)
    return jacobian_batch(chain, q[None])[0]


def singular_values(J) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    if not np.all(np.isfinite(J)):
        raise ValueError("Jacobian has non-finite entries")
    return np.linalg.svd(J, compute_uv=False)


def _wrap_into_limits(chain: SerialChain, Q: np.ndarray) -> np.ndarray:
    lo, hi = chain.limits[:, 0], chain.limits[:, 1]
    if np.any(chain._wrap):
        W = Q[:, chain._wrap]
        # one turn centred on the middle of the range, so solutions sit away from the stops
        base = (lo[chain._wrap] + hi[chain._wrap]) / 2.0 - np.pi
        W = base + np.mod(W - base, TWO_PI)
        Q[:, chain._wrap] = W
    return np.clip(Q, lo, hi)


def nearest_equivalent(chain: SerialChain, Q, ref) -> np.ndarray:
    """Shift joints of ``Q`` by whole turns towards ``ref`` where the limits allow.

    FK is unchanged; only the joint-space distance to ``ref`` shrinks.
    """
    Q = np.array(np.atleast_2d(Q), dtype=float)
    ref = np.asarray(ref, dtype=float)
    lo, hi = chain.limits[:, 0], chain.limits[:, 1]
    n = np.round((ref - Q) / TWO_PI)
    best = Q.copy()
    for k in (-1.0, 0.0, 1.0):
        cand = Q + (n + k) * TWO_PI
        ok = (cand >= lo) & (cand <= hi) & (np.abs(cand - ref) < np.abs(best - ref))
        best = np.where(ok, cand, best)
    return best


@dataclass
class IKBatchResult:
    q: np.ndarray
    success: np.ndarray
    pos_err: np.ndarray
    rot_err: np.ndarray
    iterations: np.ndarray


def ik_batch(chain: SerialChain, target_R, target_p, seeds, *, max_iter: int = IK_MAX_ITER,
             damping: float = IK_DAMPING, step_clamp: float = IK_STEP_CLAMP,
             tol_pos: float = IK_TOL_POS, tol_rot: float = IK_TOL_ROT,
             early_exit: bool = True) -> IKBatchResult:
    """Damped least-squares IK for many targets at once.

    Iterates are kept inside the joint limits (wrapped for joints with a
    full turn of range, clamped otherwise).
    """
    target_R = np.asarray(target_R, dtype=float).reshape(-1, 3, 3)
    target_p = np.asarray(target_p, dtype=float).reshape(-1, 3)
    Q = np.array(np.atleast_2d(_check_dims(chain, seeds)), dtype=float)
    n = Q.shape[0]
    pos_err = np.full(n, np.inf)
    rot_err = np.full(n, np.inf)
    iters = np.zeros(n, dtype=int)
    done = np.zeros(n, dtype=bool)
    active = np.arange(n)
    lam2 = damping * damping
    checkpoint = np.full(n, np.inf)
    for it in range(max_iter + 1):
        Rs, ps, R_tcp, p_tcp = joint_frames(chain, Q[active])
        e_p = target_p[active] - p_tcp
        rel = target_R[active] @ R_tcp.transpose(0, 2, 1)
        e_r = rotvecs(rel)
        pe = np.linalg.norm(e_p, axis=1)
        re = np.linalg.norm(e_r, axis=1)
        pos_err[active] = pe
        rot_err[active] = re
        conv = (pe < tol_pos) & (re < tol_rot)
        done[active[conv]] = True
        iters[active] = it
        keep = ~conv
        if early_exit:
            for gate_it, gate_p, gate_r in IK_STALL_GATES:
                if it == gate_it:
                    keep &= (pe < gate_p) & (re < gate_r)
            if it and it % IK_PROGRESS_WINDOW == 0:
                err = pe + re
                keep &= err < IK_PROGRESS_RATIO * checkpoint[active]
                checkpoint[active] = err
        if it == max_iter or not keep.any():
            break
        active = active[keep]
        J = _jacobian_from_frames(chain, Rs[keep], ps[keep], p_tcp[keep])
        e = np.concatenate([e_p[keep], e_r[keep]], axis=1)
        A = J @ J.transpose(0, 2, 1) + lam2 * np.eye(6)
        dq = (J.transpose(0, 2, 1) @ np.linalg.solve(A, e[..., None]))[..., 0]
        big = np.abs(dq).max(axis=1)
        scale = np.where(big > step_clamp, step_clamp / np.maximum(big, 1e-300), 1.0)
        Q[active] = _wrap_into_limits(chain, Q[active] + dq * scale[:, None])
    return IKBatchResult(Q, done, pos_err, rot_err, iters)


def inverse_kinematics(chain: SerialChain, target: Pose, seed_q, **kwargs) -> np.ndarray:
    seed_q = _check_dims(chain, seed_q)
    if not chain.within_limits(seed_q):
        raise OutOfLimits(f"seed outside the joint limits of {chain.name}")
    res = ik_batch(chain, target.R[None], target.p[None], seed_q[None], **kwargs)
    if not res.success[0]:
        raise Unreachable(f"{chain.name}: IK did not converge (pos err {res.pos_err[0]:.3g} m, "
                          f"rot err {res.rot_err[0]:.3g} rad)")
    q = res.q[0]
    if not chain.within_limits(q):
        raise OutOfLimits(f"{chain.name}: converged solution violates joint limits")
    return q


def chain_from_record(rec: dict, where: str = "chain") -> SerialChain:
    if not isinstance(rec, dict):
        raise SceneError(f"{where}: expected a mapping")
    joints = rec.get("joints")
    if not isinstance(joints, list) or not joints:
        raise SceneError(f"{where}.joints: expected a non-empty list")
    names, origins, axes, limits, radii, collides = [], [], [], [], [], []
    for i, j in enumerate(joints):
        w = f"{where}.joints[{i}]"
        if not isinstance(j, dict):
            raise SceneError(f"{w}: expected a mapping")
        names.append(str(j.get("name", f"joint{i}")))
        origins.append(pose_from_record(j.get("origin", {}), f"{w}.origin"))
        axes.append(parse_vector(j.get("axis", [0, 0, 1]), 3, f"{w}.axis"))
        lim = j.get("limits")
        if not isinstance(lim, (list, tuple)) or len(lim) != 2:
            raise SceneError(f"{w}.limits: expected [min, max]")
        limits.append([parse_angle(lim[0], f"{w}.limits[0]"), parse_angle(lim[1], f"{w}.limits[1]")])
        radii.append(parse_float(j.get("link_radius", 0.04), f"{w}.link_radius"))
        collides.append(bool(j.get("link_collides", True)))
    seeds = rec.get("ik_seeds")
    if seeds is not None:
        seeds = np.array([[parse_angle(v, f"{where}.ik_seeds") for v in s] for s in seeds])
    return SerialChain(
        name=str(rec.get("name", "chain")),
        joint_names=names, origins=origins, axes=np.array(axes), limits=np.array(limits),
        base=pose_from_record(rec.get("base", {}), f"{where}.base"),
        flange_to_tcp=pose_from_record(rec.get("flange_to_tcp", {}), f"{where}.flange_to_tcp"),
        link_radii=np.array(radii), link_collides=np.array(collides), ik_seeds=seeds,
    )


def load_chain_file(path) -> dict:
    with open(path) as fh:
        return yaml.safe_load(fh)


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("collab_assembly") / "data" / name))


def load_chain(path_or_name) -> SerialChain:
    path = Path(path_or_name)
    if not path.exists():
        path = bundled_path(str(path_or_name))
    return chain_from_record(load_chain_file(path), where=str(path.name))
