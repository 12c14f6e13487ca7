"""Oriented bounding boxes and the separating-axis overlap test.

Robot links, hands, boards and fixtures are all represented as OBBs.  Boxes
that merely touch are not in collision.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .se3 import Pose

SAT_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class OBB:
    center: np.ndarray
    R: np.ndarray              # columns are the box axes
    half: np.ndarray           # half extents along the axes
    name: str = ""

    @classmethod
    def from_pose(cls, pose: Pose, half, name: str = "") -> OBB:
        return cls(np.asarray(pose.p, float), np.asarray(pose.R, float), np.asarray(half, float), name)

    def transformed(self, pose: Pose) -> OBB:
        return OBB(pose.R @ self.center + pose.p, pose.R @ self.R, self.half, self.name)

    def inflated(self, pad: float) -> OBB:
        return OBB(self.center, self.R, self.half + pad, self.name)

    def vertices(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
        return self.center + (signs * self.half) @ self.R.T

    def to_record(self) -> dict:
        from .records import floats, pose_to_record
        rec = pose_to_record(Pose(self.center, self.R))
        rec["half_extents"] = floats(self.half)
        if self.name:
            rec["name"] = self.name
        return rec


@dataclass(frozen=True, eq=False)
class BoxSet:
    """A stack of OBBs stored as arrays for vectorised tests."""

    centers: np.ndarray   # (n, 3)
    Rs: np.ndarray        # (n, 3, 3)
    halves: np.ndarray    # (n, 3)

    @classmethod
    def of(cls, boxes) -> BoxSet:
        boxes = list(boxes)
        if not boxes:
            return cls(np.zeros((0, 3)), np.zeros((0, 3, 3)), np.zeros((0, 3)))
        return cls(np.stack([b.center for b in boxes]), np.stack([b.R for b in boxes]),
                   np.stack([b.half for b in boxes]))

    def __len__(self):
        return self.centers.shape[0]

    def inflated(self, pad: float) -> BoxSet:
        return BoxSet(self.centers, self.Rs, self.halves + pad)

    def concat(self, other: BoxSet) -> BoxSet:
        return BoxSet(np.concatenate([self.centers, other.centers]),
                      np.concatenate([self.Rs, other.Rs]),
                      np.concatenate([self.halves, other.halves]))


def sat_overlap(cA, RA, hA, cB, RB, hB) -> np.ndarray:
    """Pairwise OBB overlap for broadcast-compatible stacks of boxes.

    Inputs have shapes ``(..., 3)``, ``(..., 3, 3)``, ``(..., 3)``; the
    result has the broadcast leading shape.  Implements the 15-axis test.
    """
    cA, RA, hA = np.asarray(cA), np.asarray(RA), np.asarray(hA)
    cB, RB, hB = np.asarray(cB), np.asarray(RB), np.asarray(hB)
    # B's axes expressed in A's frame, and the centre offset in A's frame
    C = np.swapaxes(RA, -1, -2) @ RB
    t = (np.swapaxes(RA, -1, -2) @ (cB - cA)[..., None])[..., 0]
    absC = np.abs(C) + 1e-12
    shape = np.broadcast_shapes(t.shape[:-1], absC.shape[:-2], hA.shape[:-1], hB.shape[:-1])
    sep = np.zeros(shape, dtype=bool)
    # A's face axes
    rB = np.einsum("...ij,...j->...i", absC, hB)
    sep |= np.any(np.abs(t) > hA + rB - SAT_EPS, axis=-1)
    # B's face axes
    rA = np.einsum("...ji,...j->...i", absC, hA)
    tB = np.einsum("...ji,...j->...i", C, t)
    sep |= np.any(np.abs(tB) > rA + hB - SAT_EPS, axis=-1)
    # edge-edge cross products A_i x B_j; the axis is not normalised, so the
    # tolerance is scaled by its length, and (near-)parallel pairs are skipped
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            sin_ij = np.sqrt(np.maximum(1.0 - C[..., i, j] ** 2, 0.0))
            ra = hA[..., i1] * absC[..., i2, j] + hA[..., i2] * absC[..., i1, j]
            rb = hB[..., j1] * absC[..., i, j2] + hB[..., j2] * absC[..., i, j1]
            d = np.abs(t[..., i2] * C[..., i1, j] - t[..., i1] * C[..., i2, j])
            sep |= (sin_ij > 1e-6) & (d > ra + rb - SAT_EPS * sin_ij)
    return ~sep


def obb_overlap(a: OBB, b: OBB) -> bool:
    return bool(sat_overlap(a.center, a.R, a.half, b.center, b.R, b.half))


def any_overlap(a: BoxSet, b: BoxSet) -> bool:
    if len(a) == 0 or len(b) == 0:
        return False
    hit = sat_overlap(a.centers[:, None], a.Rs[:, None], a.halves[:, None],
                      b.centers[None], b.Rs[None], b.halves[None])
    return bool(hit.any())


def overlap_matrix(a: BoxSet, b: BoxSet) -> np.ndarray:
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)), dtype=bool)
    return sat_overlap(a.centers[:, None], a.Rs[:, None], a.halves[:, None],
                       b.centers[None], b.Rs[None], b.halves[None])


def batched_any_overlap(centers, Rs, halves, obstacles: BoxSet) -> np.ndarray:
    """For boxes shaped ``(N, m, ...)``, whether each of the N groups hits any obstacle."""
    n = centers.shape[0]
    if len(obstacles) == 0 or centers.shape[1] == 0:
        return np.zeros(n, dtype=bool)
    # cheap bounding-sphere rejection first
    rad_a = np.linalg.norm(halves, axis=-1)
    rad_b = np.linalg.norm(obstacles.halves, axis=-1)
    dist = np.linalg.norm(centers[:, :, None] - obstacles.centers[None, None], axis=-1)
    near = dist < rad_a[..., None] + rad_b[None, None]
    out = np.zeros(n, dtype=bool)
    if not near.any():
        return out
    gi, ai, bi = np.nonzero(near)
    hit = sat_overlap(centers[gi, ai], Rs[gi, ai], halves[gi, ai],
                      obstacles.centers[bi], obstacles.Rs[bi], obstacles.halves[bi])
    out[gi[hit]] = True
    return out


def segment_boxes(p0, p1, radius, ref_axis=None):
    """OBBs (as arrays) enclosing cylinders of ``radius`` around segments p0 -> p1.

    ``p0, p1`` have shape ``(..., 3)``; returns centres, rotations, halves.
    """
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    d = p1 - p0
    length = np.linalg.norm(d, axis=-1)
    u = d / np.maximum(length, 1e-12)[..., None]
    # any unit vector not parallel to u completes the frame
    helper = np.where(np.abs(u[..., 2:3]) < 0.9, np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))
    v = np.cross(u, helper)
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    w = np.cross(u, v)
    R = np.stack([u, v, w], axis=-1)
    radius = np.broadcast_to(np.asarray(radius, float), length.shape)
    half = np.stack([length / 2.0 + radius, radius, radius], axis=-1)
    return (p0 + p1) / 2.0, R, half


def box_mesh(half) -> tuple[np.ndarray, np.ndarray]:
    """Closed triangle mesh of an axis-aligned box centred at the origin."""
    hx, hy, hz = half
    V = np.array([[sx * hx, sy * hy, sz * hz]
                  for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
    # vertex index = 4*ix + 2*iy + iz with i* in {0, 1}
    quads = [(0, 1, 3, 2), (4, 6, 7, 5),   # -x, +x
             (0, 4, 5, 1), (2, 3, 7, 6),   # -y, +y
             (0, 2, 6, 4), (1, 5, 7, 3)]   # -z, +z
    F = []
    for a, b, c, d in quads:
        F.append((a, b, c))
        F.append((a, c, d))
    return V, np.array(F, dtype=int)


def euler_characteristic(faces) -> int:
    faces = np.asarray(faces)
    edges = set()
    for tri in faces:
        for i in range(3):
            a, b = int(tri[i]), int(tri[(i + 1) % 3])
            edges.add((min(a, b), max(a, b)))
    n_vertices = len(np.unique(faces))
    return n_vertices - len(edges) + len(faces)


def is_watertight(faces) -> bool:
    """Every edge shared by exactly two faces and V - E + F = 2."""
    faces = np.asarray(faces)
    counts: dict = {}
    for tri in faces:
        for i in range(3):
            a, b = int(tri[i]), int(tri[(i + 1) % 3])
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    return all(c == 2 for c in counts.values()) and euler_characteristic(faces) == 2
