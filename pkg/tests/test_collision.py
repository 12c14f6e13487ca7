import numpy as np
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from collab_assembly.collision import (OBB, BoxSet, any_overlap, batched_any_overlap, box_mesh,
                                       euler_characteristic, is_watertight, obb_overlap, overlap_matrix,
                                       sat_overlap, segment_boxes)
from collab_assembly.se3 import rot_z
from helpers import boxes_intersect_oracle, point_sample_overlap


def random_box(rng, spread=0.6):
    return (rng.uniform(-spread, spread, 3), Rotation.random(random_state=rng.integers(1 << 30)).as_matrix(),
            rng.uniform(0.02, 0.4, 3))


def test_sat_agrees_with_vertex_projection_oracle():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        a, b = random_box(rng), random_box(rng)
        assert bool(sat_overlap(*a, *b)) == boxes_intersect_oracle(*a, *b)


def test_sat_never_misses_a_sampled_overlap():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        a, b = random_box(rng), random_box(rng)
        if point_sample_overlap(*a, *b, rng):
            assert sat_overlap(*a, *b)


def test_parallel_axes_are_not_false_separators():
    # shared axes make some edge cross products vanish; those must not separate
    a = (np.zeros(3), np.eye(3), np.array([0.5, 0.1, 0.1]))
    b = (np.array([0.3, 0.05, 0.0]), rot_z(0.3), np.array([0.2, 0.05, 0.05]))
    assert sat_overlap(*a, *b)
    assert sat_overlap(*a, *a)


def test_touching_boxes_do_not_collide():
    a = OBB(np.zeros(3), np.eye(3), np.array([0.5, 0.5, 0.5]))
    b = OBB(np.array([1.0, 0.0, 0.0]), np.eye(3), np.array([0.5, 0.5, 0.5]))
    assert not obb_overlap(a, b)
    assert obb_overlap(a, b.inflated(1e-6))


@settings(max_examples=200)
@given(st.integers(0, 1 << 30))
def test_sat_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = random_box(rng), random_box(rng)
    assert bool(sat_overlap(*a, *b)) == bool(sat_overlap(*b, *a))


@settings(max_examples=100)
@given(st.integers(0, 1 << 30))
def test_overlap_invariant_under_rigid_motion(seed):
    rng = np.random.default_rng(seed)
    a, b = random_box(rng), random_box(rng)
    R = Rotation.random(random_state=seed).as_matrix()
    t = rng.normal(size=3)
    moved = [(R @ c + t, R @ Rb, h) for c, Rb, h in (a, b)]
    # skip near-touching cases where rounding can flip the answer
    if abs(_gap(a, b)) > 1e-9:
        assert bool(sat_overlap(*a, *b)) == bool(sat_overlap(*moved[0], *moved[1]))


def _gap(a, b):
    grown = (a[0], a[1], a[2] + 1e-8)
    shrunk = (a[0], a[1], np.maximum(a[2] - 1e-8, 1e-9))
    return 0.0 if sat_overlap(*grown, *b) != sat_overlap(*shrunk, *b) else 1.0


def test_batched_helpers_agree_with_pairwise():
    rng = np.random.default_rng(2)
    A = [OBB(*random_box(rng)) for _ in range(6)]
    B = [OBB(*random_box(rng)) for _ in range(5)]
    M = overlap_matrix(BoxSet.of(A), BoxSet.of(B))
    for i, a in enumerate(A):
        for j, b in enumerate(B):
            assert M[i, j] == obb_overlap(a, b)
    assert any_overlap(BoxSet.of(A), BoxSet.of(B)) == M.any()
    sa = BoxSet.of(A)
    groups = batched_any_overlap(sa.centers.reshape(2, 3, 3), sa.Rs.reshape(2, 3, 3, 3),
                                 sa.halves.reshape(2, 3, 3), BoxSet.of(B))
    assert list(groups) == [M[:3].any(), M[3:].any()]
    assert not any_overlap(BoxSet.of([]), BoxSet.of(B))


def test_segment_box_encloses_cylinder():
    c, R, h = segment_boxes(np.zeros(3), np.array([0.0, 0.0, 1.0]), 0.1)
    assert np.allclose(c, [0, 0, 0.5])
    assert np.allclose(h, [0.6, 0.1, 0.1])
    assert np.allclose(R[:, 0], [0, 0, 1])
    assert np.allclose(R.T @ R, np.eye(3))


def test_box_mesh_is_watertight():
    V, F = box_mesh([0.1, 0.2, 0.3])
    assert len(V) == 8 and len(F) == 12
    assert euler_characteristic(F) == 2 and is_watertight(F)
    assert not is_watertight(F[:-1])
    # outward normals: every face normal points away from the centre
    for tri in F:
        a, b, c = V[tri]
        n = np.cross(b - a, c - a)
        assert n @ (a + b + c) / 3 > 0
