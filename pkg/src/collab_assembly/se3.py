"""Rigid transforms, rotation distances and bounded pose sampling."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

QUAT_NORM_TOL = 1e-6


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def rot_axis(axis, angle: float) -> np.ndarray:
    """Rotation matrix for ``angle`` radians about ``axis`` (normalised here)."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return Rotation.from_rotvec(axis * angle).as_matrix()


def rot_x(angle: float) -> np.ndarray:
    return rot_axis((1.0, 0.0, 0.0), angle)


def rot_y(angle: float) -> np.ndarray:
    return rot_axis((0.0, 1.0, 0.0), angle)


def rot_z(angle: float) -> np.ndarray:
    return rot_axis((0.0, 0.0, 1.0), angle)


@dataclass(frozen=True, eq=False)
class Pose:
    """A rigid transform: ``x_world = R @ x_local + p``."""

    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    # the quaternion this pose was read from, kept so files round-trip bit for bit
    source_quat: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(3)
        R = np.array(self.R, dtype=float).reshape(3, 3)
        p.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "R", R)

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_matrix(cls, T) -> Pose:
        T = np.asarray(T, dtype=float)
        return cls(T[:3, 3], T[:3, :3])

    @classmethod
    def from_quat(cls, position, quat_wxyz) -> Pose:
        q = np.array(quat_wxyz, dtype=float).reshape(4)
        R = quat_to_matrix(q)
        q = -q if q[0] < 0 else q
        q.setflags(write=False)
        return cls(position, R, q)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.p
        return T

    def quat(self) -> np.ndarray:
        if self.source_quat is not None:
            return self.source_quat.copy()
        return matrix_to_quat(self.R)

    def inverse(self) -> Pose:
        return inverse(self)

    def __matmul__(self, other: Pose) -> Pose:
        return compose(self, other)

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.R.T + self.p

    def is_valid(self, tol: float = 1e-9) -> bool:
        return (np.linalg.norm(self.R.T @ self.R - np.eye(3)) < tol
                and np.linalg.det(self.R) > 0)

    def allclose(self, other: Pose, atol: float = 1e-9) -> bool:
        return (np.allclose(self.p, other.p, atol=atol)
                and np.allclose(self.R, other.R, atol=atol))

    def __repr__(self) -> str:
        q = np.round(self.quat(), 6)
        return f"Pose(p={np.round(self.p, 6).tolist()}, q_wxyz={q.tolist()})"


def compose(a: Pose, b: Pose) -> Pose:
    """Frame chaining: ``b`` expressed in ``a``'s frame, result in ``a``'s parent."""
    return Pose(a.R @ b.p + a.p, a.R @ b.R)


def inverse(a: Pose) -> Pose:
    Rt = a.R.T
    return Pose(-Rt @ a.p, Rt)


def quat_to_matrix(quat_wxyz, tol: float = QUAT_NORM_TOL) -> np.ndarray:
    q = np.asarray(quat_wxyz, dtype=float).reshape(4)
    n = np.linalg.norm(q)
    if abs(n - 1.0) > tol:
        raise ValueError(f"quaternion norm {n:.9g} deviates from 1 by more than {tol:g}")
    w, x, y, z = q / n
    return Rotation.from_quat([x, y, z, w]).as_matrix()


def matrix_to_quat(R) -> np.ndarray:
    """Unit quaternion ``[w, x, y, z]`` with ``w >= 0``."""
    x, y, z, w = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat()
    q = np.array([w, x, y, z])
    return -q if w < 0 else q


def rotation_distance(R1, R2) -> float:
    """Geodesic angle of the relative rotation ``R1.T @ R2``, in [0, pi].

    Extracted from the quaternion of the relative rotation, which stays
    well conditioned near pi where the matrix logarithm does not.
    """
    rel = np.asarray(R1, dtype=float).T @ np.asarray(R2, dtype=float)
    x, y, z, w = Rotation.from_matrix(rel).as_quat()
    return float(2.0 * np.arctan2(np.sqrt(x * x + y * y + z * z), abs(w)))


def rotation_distances(R1, Rs) -> np.ndarray:
    """Vectorised :func:`rotation_distance` of one rotation against many."""
    rel = np.einsum("ji,njk->nik", np.asarray(R1, dtype=float), np.asarray(Rs, dtype=float))
    quats = Rotation.from_matrix(rel).as_quat()
    return 2.0 * np.arctan2(np.linalg.norm(quats[:, :3], axis=1), np.abs(quats[:, 3]))


def quats_from_matrices(R) -> np.ndarray:
    """Unit quaternions (x, y, z, w) of stacked rotation matrices, w >= 0.

    Shepperd's method: build from the largest of the four diagonal
    combinations, so every branch divides by a well-sized number.
    """
    R = np.asarray(R, dtype=float)
    m00, m11, m22 = R[..., 0, 0], R[..., 1, 1], R[..., 2, 2]
    d = np.stack([1.0 + m00 + m11 + m22, 1.0 + m00 - m11 - m22,
                  1.0 - m00 + m11 - m22, 1.0 - m00 - m11 + m22], axis=-1)
    k = np.argmax(d, axis=-1)
    s = 2.0 * np.sqrt(np.maximum(np.take_along_axis(d, k[..., None], -1)[..., 0], 1e-300))
    a21, a12 = R[..., 2, 1], R[..., 1, 2]
    a02, a20 = R[..., 0, 2], R[..., 2, 0]
    a10, a01 = R[..., 1, 0], R[..., 0, 1]
    q = np.empty(R.shape[:-2] + (4,))
    cases = [
        (0.25 * s, (a21 - a12) / s, (a02 - a20) / s, (a10 - a01) / s),      # w largest
        ((a21 - a12) / s, 0.25 * s, (a01 + a10) / s, (a02 + a20) / s),      # x largest
        ((a02 - a20) / s, (a01 + a10) / s, 0.25 * s, (a12 + a21) / s),      # y largest
        ((a10 - a01) / s, (a02 + a20) / s, (a12 + a21) / s, 0.25 * s),      # z largest
    ]
    for i, (w, x, y, z) in enumerate(cases):
        m = k == i
        q[..., 0] = np.where(m, x, q[..., 0]) if i else x
        q[..., 1] = np.where(m, y, q[..., 1]) if i else y
        q[..., 2] = np.where(m, z, q[..., 2]) if i else z
        q[..., 3] = np.where(m, w, q[..., 3]) if i else w
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return np.where(q[..., 3:] < 0, -q, q)


def rotvecs(R) -> np.ndarray:
    """Axis-angle vectors (matrix logarithm) of stacked rotations."""
    R = np.asarray(R, dtype=float)
    v = 0.5 * np.stack([R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0],
                        R[..., 1, 0] - R[..., 0, 1]], axis=-1)
    sin = np.linalg.norm(v, axis=-1)
    cos = 0.5 * (R[..., 0, 0] + R[..., 1, 1] + R[..., 2, 2] - 1.0)
    angle = np.arctan2(sin, cos)
    out = v * np.where(sin > 1e-12, angle / np.maximum(sin, 1e-300), 1.0)[..., None]
    # the skew part loses the axis close to a half turn
    far = cos < -0.5
    if np.any(far):
        out[far] = _rotvecs_quat(R[far])
    return out


def _rotvecs_quat(R) -> np.ndarray:
    q = quats_from_matrices(R)
    v = q[..., :3]
    n = np.linalg.norm(v, axis=-1)
    angle = 2.0 * np.arctan2(n, q[..., 3])
    scale = np.where(n > 1e-12, angle / np.maximum(n, 1e-300), 2.0 / np.maximum(q[..., 3], 1e-300))
    return v * scale[..., None]


def random_unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    # a zero draw has probability zero, but guard anyway
    norms[norms == 0.0] = 1.0
    return v / norms


# keeps re-measured samples strictly inside the open bounds
_SHRINK = 1.0 - 1e-9


def sample_poses_near(goal: Pose, max_rot: float, max_trans: float, n: int, rng) -> list[Pose]:
    """Draw ``n`` poses with rotation distance < max_rot and offset < max_trans.

    The rotation is a uniform random axis with angle uniform in [0, max_rot);
    the translation is uniform in the ball of radius max_trans.
    """
    if max_rot > np.pi:
        raise ValueError("max_rot must not exceed pi")
    if max_trans < 0:
        raise ValueError("max_trans must be non-negative")
    rng = _as_rng(rng)
    axes = random_unit_vectors(rng, n)
    angles = rng.uniform(0.0, 1.0, size=n) * max_rot * _SHRINK
    dirs = random_unit_vectors(rng, n)
    radii = max_trans * _SHRINK * rng.uniform(0.0, 1.0, size=n) ** (1.0 / 3.0)
    dR = Rotation.from_rotvec(axes * angles[:, None]).as_matrix()
    out = []
    for i in range(n):
        out.append(Pose(goal.p + dirs[i] * radii[i], goal.R @ dR[i]))
    return out


def sample_pose_near(goal: Pose, max_rot: float = np.radians(45.0), max_trans: float = 0.5,
                     rng_seed=0) -> Pose:
    return sample_poses_near(goal, max_rot, max_trans, 1, rng_seed)[0]
