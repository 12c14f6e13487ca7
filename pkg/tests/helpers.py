"""Shared builders and independent oracles for the test suite."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from collab_assembly.collision import BoxSet
from collab_assembly.grasping import BoardSpec, generate_candidates
from collab_assembly.kinematics import SerialChain
from collab_assembly.planner import PlanEnv, grasp_ik
from collab_assembly.scene_io import load_scene
from collab_assembly.se3 import Pose

# Board rows used throughout: (length, width, thickness, mass)
LARGE = (0.390, 0.288, 0.010, 0.8)
MEDIUM = (0.587, 0.295, 0.010, 1.8)
SMALL = (0.397, 0.280, 0.003, 0.22)


def board(kind=MEDIUM, bid="b", mass=None) -> BoardSpec:
    L, W, T, m = kind
    return BoardSpec(bid, L, W, T, m if mass is None else mass)


@lru_cache(maxsize=1)
def cabinet():
    """The bundled scene; callers must not mutate it (use dataclasses.replace)."""
    return load_scene("cabinet.yaml")


def one_link_chain(length=1.0, axis=(0, 0, 1), limits=(-np.pi, np.pi)) -> SerialChain:
    return SerialChain("one", ["j"], [Pose()], np.array([axis], float), np.array([limits]),
                       flange_to_tcp=Pose([length, 0, 0]))


def planar_chain(lengths=(1.0, 1.0)) -> SerialChain:
    origins = [Pose()] + [Pose([l, 0, 0]) for l in lengths[:-1]]
    k = len(lengths)
    return SerialChain("planar", [f"j{i}" for i in range(k)], origins, np.tile([0.0, 0, 1], (k, 1)),
                       np.tile([-np.pi, np.pi], (k, 1)), flange_to_tcp=Pose([lengths[-1], 0, 0]))


def fk_oracle(chain: SerialChain, q) -> np.ndarray:
    """4x4 product of homogeneous matrices, written independently of the library FK."""
    def hom(R, p):
        T = np.eye(4)
        T[:3, :3] = R
        T[:3, 3] = p
        return T

    def rodrigues(axis, angle):
        k = np.asarray(axis, float)
        K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K

    T = hom(chain.base.R, chain.base.p)
    for o, a, qi in zip(chain.origins, chain.axes, q):
        T = T @ hom(o.R, o.p) @ hom(rodrigues(a, qi), np.zeros(3))
    return T @ hom(chain.flange_to_tcp.R, chain.flange_to_tcp.p)


def box_vertices(c, R, h) -> np.ndarray:
    s = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], float)
    return c + (s * h) @ R.T


def boxes_intersect_oracle(cA, RA, hA, cB, RB, hB, tol=1e-9) -> bool:
    """Separating axes from normalised face normals and edge cross products,
    with the boxes projected through their vertices (no radius formula)."""
    VA, VB = box_vertices(cA, RA, hA), box_vertices(cB, RB, hB)
    axes = [RA[:, i] for i in range(3)] + [RB[:, j] for j in range(3)]
    for i in range(3):
        for j in range(3):
            n = np.cross(RA[:, i], RB[:, j])
            nn = np.linalg.norm(n)
            if nn > 1e-6:
                axes.append(n / nn)
    for ax in axes:
        pa, pb = VA @ ax, VB @ ax
        if pa.max() < pb.min() + tol or pb.max() < pa.min() + tol:
            return False
    return True


def point_sample_overlap(cA, RA, hA, cB, RB, hB, rng, n=4000) -> bool:
    """Monte-Carlo witness: some point of A lies strictly inside B."""
    u = rng.uniform(-1, 1, size=(n, 3)) * hA
    pts = cA + u @ RA.T
    local = (pts - cB) @ RB
    return bool(np.any(np.all(np.abs(local) < hB, axis=1)))


def flip_query(kind=MEDIUM, tcp_xyz=(0.35, 0.23, 0.45)):
    """Medium-board flip: hold the board by its long edge with the approach
    horizontal and the opening vertical, then turn it 180 deg about the
    approach axis (the last wrist joint)."""
    scene = cabinet()
    arm = scene.robot.arm("robot-left")
    b = board(kind, "flip")
    cands = generate_candidates(b, arm.owner, 0.05)
    g = [c for c in cands if c.axis_tag == "transverse" and abs(c.contact_center[0]) < 1e-9
         and c.approach[1] > 0 and c.contact_center[1] < 0][0]
    side, opening, approach = [0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]
    tcp = Pose(tcp_xyz, np.column_stack([side, opening, approach]))
    start_pose = tcp @ g.tcp_in_object().inverse()
    q0 = grasp_ik(arm, start_pose, g)
    qg = q0.copy()
    qg[5] = q0[5] + np.pi if q0[5] < 0 else q0[5] - np.pi
    env = PlanEnv.holding(arm, BoxSet.of(scene.fixtures + scene.robot.body), b, g)
    return arm, b, g, q0, qg, env
