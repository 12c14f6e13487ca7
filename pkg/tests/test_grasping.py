import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collab_assembly.collision import BoxSet
from collab_assembly.contact import SoftFingerParams
from collab_assembly.grasping import (BoardSpec, GraspCandidate, GraspSet, arm_collides, check_human_grasp_stability,
                                      feasible_grasps, feasible_grasps_batch, generate_candidates, grasp_wrench,
                                      grid_positions, palm_clear, shared_grasps)
from collab_assembly.se3 import Pose, rot_x, rot_z
from helpers import MEDIUM, SMALL, board

HUMAN_PADS = SoftFingerParams(mu=0.8, h=0.01, K=5.0, r1=0.04, r2=0.05)
WORK_POSE = Pose([0.35, 0.23, 0.25])


def test_small_board_candidate_count():
    c = generate_candidates(board(SMALL), "robot-left", 0.05)
    assert len(c) == 7 * 5 * 4
    assert all(abs(np.dot(g.approach, g.opening_dir)) < 1e-9 for g in c)
    assert all(g.width == pytest.approx(0.003) for g in c)
    assert [g.index for g in c] == list(range(len(c)))


def test_coarse_grid_collapses_to_com():
    c = generate_candidates(board(SMALL), "human-left", 1.0)
    assert len(c) == 4
    assert all(g.contact_center == (0.0, 0.0, 0.0) for g in c)
    assert {g.axis_tag for g in c} == {"longitudinal", "transverse"}


def test_width_gate():
    thick = BoardSpec("t", 0.5, 0.3, 0.10, 1.0)
    c = generate_candidates(thick, "robot-left", 0.05)
    assert len(c) == 0 and c.warning


def test_grid_positions_are_centred():
    g = grid_positions(0.397, 0.05)
    assert len(g) == 7
    assert np.allclose(g, -g[::-1])
    assert np.all(np.abs(g) < 0.397 / 2)


def test_board_validation():
    with pytest.raises(ValueError):
        BoardSpec("x", 0.1, 0.2, 0.01, 1.0)
    with pytest.raises(ValueError):
        BoardSpec("x", 0.3, 0.2, 0.01, -1.0)
    assert BoardSpec("x", 0.3, 0.2, 0.01, 0.0).mass == 0.0


def test_grasp_record_roundtrip():
    g = generate_candidates(board(), "robot-left")[17]
    assert GraspCandidate.from_record(g.to_record()) == g


def test_unreachable_pose_gives_empty_set(scene):
    arm = scene.robot.left
    b = board()
    gs = feasible_grasps(b, Pose([0.0, 0.23, 2.3]), generate_candidates(b, arm.owner), arm, BoxSet.of([]))
    assert len(gs) == 0


def test_workspace_pose_revalidates_and_is_deterministic(scene):
    arm = scene.robot.left
    b = board()
    cands = generate_candidates(b, arm.owner)
    obstacles = BoxSet.of(scene.fixtures + scene.robot.body)
    a = feasible_grasps(b, WORK_POSE, cands, arm, obstacles)
    assert len(a) > 0
    assert all(a.revalidate(b, arm, obstacles))
    again = feasible_grasps(b, WORK_POSE, cands, arm, obstacles)
    assert a.keys() == again.keys()
    assert all(np.array_equal(q1, q2) for (_, q1), (_, q2) in zip(a.grasps, again.grasps))


def test_batch_matches_single_pose_queries(scene):
    arm = scene.robot.left
    b = board(SMALL)
    cands = generate_candidates(b, arm.owner)
    poses = [WORK_POSE, Pose([0.3, 0.1, 0.3], rot_z(0.5)), Pose([0.0, 0.23, 2.3])]
    batch = feasible_grasps_batch(b, poses, cands, arm, BoxSet.of([]))
    for p, gs in zip(poses, batch):
        assert gs.keys() == feasible_grasps(b, p, cands, arm, BoxSet.of([])).keys()


def test_palm_never_inside_the_board():
    b = board()
    cands = generate_candidates(b, "robot-left")
    from collab_assembly.grasping import ROBOT_GRIPPER
    mask = palm_clear(b, ROBOT_GRIPPER, cands)
    # only pinches near an edge, approaching from outside, keep the palm clear
    for g, ok in zip(cands, mask):
        if ok:
            c, a = np.array(g.contact_center), np.array(g.approach)
            assert np.any(np.abs(c[:2] - a[:2] * 0.0) <= b.half[:2])
            assert np.dot(c[:2], a[:2]) < 0


def test_shared_grasp_examples(scene):
    arm = scene.robot.left
    b = board()
    cands = generate_candidates(b, arm.owner)
    a = feasible_grasps(b, WORK_POSE, cands, arm, BoxSet.of([]))
    assert shared_grasps(a, a) == a.candidates()
    assert shared_grasps(a, GraspSet(WORK_POSE, [], b.id, arm.owner)) == []
    turned = Pose(WORK_POSE.p, rot_z(np.pi))
    other = feasible_grasps(b, turned, cands, arm, BoxSet.of([]))
    brute = [g for g, _ in a.grasps if any(g.key == h.key for h, _ in other.grasps)]
    assert shared_grasps(a, other) == brute
    with pytest.raises(ValueError):
        shared_grasps(a, GraspSet(WORK_POSE, [], "other", arm.owner))


def test_candidates_independent_of_pose():
    b = board()
    assert generate_candidates(b, "robot-left") == generate_candidates(b, "robot-left")


def test_arm_collision_against_held_board(scene):
    arm = scene.robot.left
    q = scene.robot.home_config("robot-left")
    assert not arm_collides(arm, q, BoxSet.of([]))[0]
    from collab_assembly.kinematics import forward_kinematics
    tcp = forward_kinematics(arm.chain, q)
    # a board right through the middle of the arm
    big = BoxSet.of([BoardSpec("x", 2.0, 2.0, 0.01, 1.0).obb(Pose(arm.chain.base.p + [0, 0, 0.25]))])
    assert arm_collides(arm, q, BoxSet.of([]), big)[0]
    assert tcp is not None


def test_stability_examples():
    b = board(MEDIUM)
    light = board(MEDIUM, mass=0.0)
    g_edge = [g for g in generate_candidates(b, "human-left") if g.axis_tag == "longitudinal"][0]
    level = Pose([0.5, 0.0, 0.3])
    assert check_human_grasp_stability(g_edge, light, level, HUMAN_PADS, 25.0)
    # pinch at the CoM with the opening along gravity: no moment arm
    com = GraspCandidate("human-left", (0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 0.0, 1.0), 0.01, "longitudinal")
    assert check_human_grasp_stability(com, b, level, HUMAN_PADS, 25.0)
    heavy = BoardSpec("h", 0.6, 0.3, 0.01, 5.0)
    far = GraspCandidate("human-left", (-0.28, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 0.0, 1.0), 0.01, "longitudinal")
    f_n, f_t, tau = grasp_wrench(far, heavy, level)
    # hand check: 5 kg at 0.28 m, horizontal board, weight along the pinch axis
    assert tau == pytest.approx(0.0, abs=1e-12) and f_n == pytest.approx(5 * 9.81)
    upright = Pose([0.5, 0.0, 0.3], rot_x(np.pi / 2))
    f_n, f_t, tau = grasp_wrench(far, heavy, upright)
    assert tau == pytest.approx(5 * 9.81 * 0.28, rel=1e-9)
    assert not check_human_grasp_stability(far, heavy, upright, HUMAN_PADS, 25.0)


def test_stability_only_for_human():
    g = generate_candidates(board(), "robot-left")[0]
    with pytest.raises(ValueError):
        check_human_grasp_stability(g, board(), Pose(), HUMAN_PADS, 25.0)


@settings(max_examples=50)
@given(st.floats(0.0, 3.0))
def test_stability_monotone_in_mass(m):
    g = GraspCandidate("human-left", (-0.2, 0.05, 0.0), (1.0, 0.0, 0.0), (0.0, 0.0, 1.0), 0.01, "longitudinal")
    pose = Pose([0.5, 0.0, 0.3], rot_x(1.0))
    if check_human_grasp_stability(g, board(MEDIUM, mass=m * 1.5), pose, HUMAN_PADS, 25.0):
        assert check_human_grasp_stability(g, board(MEDIUM, mass=m), pose, HUMAN_PADS, 25.0)
