import dataclasses

import numpy as np
import pytest

from collab_assembly.comfort import ComfortScore, GoalPoseCandidate
from collab_assembly.errors import NoBimanualPose, NoHandoverPose
from collab_assembly.grasping import BoardSpec, feasible_grasps, generate_candidates
from collab_assembly.handover import (HandoverCandidate, build_handover_plan, filter_comfortable, filter_shared,
                                      handover_quality, select_handover_pose, select_rr_handover_pose,
                                      transfer_obstacles)
from collab_assembly.se3 import Pose, rot_x, rot_z, rotation_distance
from collab_assembly.kinematics import forward_kinematics
from helpers import cabinet


def _cand(pose, value, index):
    g = generate_candidates(cabinet().boards[cabinet().sequence[0]], "human-left")[0]
    return GoalPoseCandidate(pose, ComfortScore(value, g, np.zeros(7)), [], index)


def test_quality_metric_hand_value():
    target = Pose([0.5, 0.0, 0.8])
    p = Pose([0.5, 0.3, 0.4], rot_z(0.5))
    assert handover_quality(p, target, 0.1) == pytest.approx(0.5 + 0.1 * 0.5)
    assert handover_quality(target, target, 0.1) == 0.0


def test_select_orders_like_brute_force(rng):
    target = Pose([0.5, 0.0, 0.8])
    SS = []
    for i in range(40):
        p = Pose(target.p + rng.uniform(-0.4, 0.4, 3), rot_x(rng.uniform(-1, 1)) @ rot_z(rng.uniform(-1, 1)))
        SS.append(HandoverCandidate(p, None, [object()], 0.0, i))
    SS.append(HandoverCandidate(SS[3].pose, None, [object()], 0.0, 40))  # tie with index 3
    ordered = select_handover_pose(SS, target, 0.1)
    brute = sorted(range(len(SS)), key=lambda i: (np.linalg.norm(SS[i].pose.p - target.p)
                                                   + 0.1 * rotation_distance(SS[i].pose.R, target.R), i))
    assert [c.index for c in ordered] == brute
    assert ordered.index(SS[3]) + 1 == ordered.index(SS[-1])
    with pytest.raises(NoHandoverPose):
        select_handover_pose([], target)


def test_comfort_filter_is_strict():
    s = cabinet()
    b = s.boards[s.sequence[0]]
    cands = [_cand(Pose(), v, i) for i, v in enumerate([0.05, 0.06, 0.0600001, 0.2])]
    kept = filter_comfortable(cands, b, s.human, 0.06)
    assert [c.index for c in kept] == [2, 3]
    assert filter_comfortable([], b, s.human, 0.06) == []
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            filter_comfortable(cands, b, s.human, bad)


@pytest.fixture(scope="module")
def rr_first():
    s = cabinet()
    bid = s.sequence[0]
    return s, s.boards[bid], select_rr_handover_pose(s.boards[bid], s.initial_poses[bid], s)


def test_rr_selection_is_feasible(rr_first):
    s, b, rr = rr_first
    assert rr.score == len(rr.grasps) > 0 and rr.admissible >= 1
    arm = s.robot.arm(s.robot.suction_arm)
    tcp = forward_kinematics(arm.chain, rr.q_suction)
    assert tcp.allclose(rr.pose @ rr.attach.tcp_in_object(), atol=1e-4)
    # offering only the chosen pose gives it back
    again = select_rr_handover_pose(b, s.initial_poses[b.id], s, candidates=[rr.pose])
    assert again.pose.allclose(rr.pose, atol=0) and again.score == rr.score


def test_rr_selection_rejects_ungraspable_board():
    s = cabinet()
    bid = s.sequence[0]
    thick = dataclasses.replace(s.boards[bid], thickness=0.10)
    with pytest.raises(NoBimanualPose):
        select_rr_handover_pose(thick, s.initial_poses[bid], s, candidates=[Pose([0.38, 0.0, 0.45])])


def test_shared_filter_matches_membership_oracle(rr_first):
    s, b, rr = rr_first
    arm = s.robot.arm(s.robot.receiving_arm)
    obstacles = transfer_obstacles(s, b.id)
    goal = s.assembly_poses[b.id]
    S = [_cand(Pose(goal.p + [0.0, 0.0, dz], goal.R), 0.5, i) for i, dz in enumerate([0.0, 0.15, 0.3])]
    S.append(_cand(rr.pose, 0.5, 3))
    SS = filter_shared(S, rr.grasps, b, arm, obstacles, pad=s.settings.collision_pad)
    cands = generate_candidates(b, arm.owner)
    rr_keys = set(rr.grasps.keys())
    for c in S:
        here = feasible_grasps(b, c.pose, cands, arm, obstacles, pad=s.settings.collision_pad)
        oracle = [g.key for g, _ in here.grasps if g.key in rr_keys]
        got = [h for h in SS if h.index == c.index]
        assert (len(got) == 1) == bool(oracle)
        if got:
            assert [g.key for g in got[0].shared] == oracle
    # the robot-robot pose itself shares everything with itself
    assert any(h.index == 3 for h in SS)


def test_first_board_plan_chains(rr_first):
    s, b, _ = rr_first
    res = build_handover_plan(b, s.initial_poses[b.id], s.assembly_poses[b.id], s)
    kinds = [st.kind for st in res.steps]
    assert kinds == ["suction-pick", "robot-robot-transfer", "constrained-move", "human-release"]
    for prev, nxt in zip(res.steps, res.steps[1:]):
        assert prev.end.allclose(nxt.start, atol=1e-12)
    assert res.steps[0].start.allclose(s.initial_poses[b.id], atol=0)
    assert all(st.object == b.id for st in res.steps)
    d = res.diagnostics
    assert d["SS"] <= d["S"] <= d["samples"]
    assert d["comfort"] > s.settings.comfort_threshold
