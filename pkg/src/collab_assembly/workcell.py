"""Scene model: robot, human, boards, fixtures and tunable settings."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .collision import OBB, BoxSet, obb_overlap
from .contact import SoftFingerParams
from .errors import SceneError
from .grasping import HUMAN_HAND, ROBOT_GRIPPER, Arm, BoardSpec, EndEffector
from .kinematics import SerialChain
from .se3 import Pose


@dataclass(frozen=True)
class Settings:
    comfort_threshold: float = 0.15
    goal_samples: int = 200
    max_rot: float = np.radians(45.0)
    max_trans: float = 0.5
    w_rot: float = 0.1                  # m per rad in the handover distance metric
    grasp_spacing: float = 0.05
    human_grasp_spacing: float = 0.05
    budget_s: float = 30.0
    edge_step: float = 0.02
    extend_step: float = 0.25
    shortcut_attempts: int = 200
    max_waypoint_step: float = 0.05
    joint_speed: float = 0.5
    inclination_mode: str = "roll"
    constraint_margin: float = 0.01     # rad kept clear of the limit while planning
    collision_pad: float = 0.015        # m added to proxies while planning
    max_handover_attempts: int = 0      # 0 = try every candidate
    seed: int = 7

    def __post_init__(self):
        if not 0.0 < self.comfort_threshold < 1.0:
            raise SceneError(f"settings.comfort_threshold must be in (0, 1), got {self.comfort_threshold}")
        if self.inclination_mode not in ("roll", "opening"):
            raise SceneError(f"settings.inclination_mode must be 'roll' or 'opening'")
        if self.goal_samples <= 0:
            raise SceneError("settings.goal_samples must be positive")

    def with_overrides(self, **kw) -> Settings:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass(eq=False)
class RobotModel:
    left: Arm
    right: Arm
    pads: SoftFingerParams
    grip_force: float
    body: list                     # OBBs of the mount / torso in world
    suction_arm: str = "robot-right"
    tool_length: float = 0.15
    tool_radius: float = 0.015
    tool_initial_pose: Pose = field(default_factory=Pose.identity)
    home: dict = field(default_factory=dict)   # owner -> joint config

    def arm(self, owner: str) -> Arm:
        if owner == "robot-left":
            return self.left
        if owner == "robot-right":
            return self.right
        raise KeyError(owner)

    @property
    def receiving_arm(self) -> str:
        return "robot-left" if self.suction_arm == "robot-right" else "robot-right"

    def home_config(self, owner: str) -> np.ndarray:
        return np.asarray(self.home[owner], dtype=float)


@dataclass(eq=False)
class HumanModel:
    stance: Pose
    left: Arm
    right: Arm
    body: list                     # OBBs in world
    pads: SoftFingerParams
    grip_force: float = 25.0
    description: str = "human.yaml"

    @property
    def arms(self) -> tuple:
        return (self.left, self.right)


@dataclass(eq=False)
class Scene:
    robot: RobotModel
    human: HumanModel
    boards: dict                   # id -> BoardSpec
    initial_poses: dict            # id -> Pose
    assembly_poses: dict           # id -> Pose
    sequence: list                 # board ids in assembly order
    fixtures: list                 # OBBs (table, fixtures)
    settings: Settings = field(default_factory=Settings)
    finished: list = field(default_factory=list)   # [(BoardSpec, Pose)]
    name: str = "scene"

    def validate(self):
        ids = set(self.boards)
        if sorted(self.sequence) != sorted(ids) or len(set(self.sequence)) != len(self.sequence):
            raise SceneError("assembly sequence must be a permutation of the board ids")
        for bid in ids:
            if bid not in self.initial_poses:
                raise SceneError(f"board {bid}: missing initial pose")
            if bid not in self.assembly_poses:
                raise SceneError(f"board {bid}: missing assembly pose")
        order = list(self.sequence)
        for i, a in enumerate(order):
            for b in order[i + 1:]:
                if obb_overlap(self.boards[a].obb(self.initial_poses[a]),
                               self.boards[b].obb(self.initial_poses[b])):
                    raise SceneError(f"initial poses of boards {a} and {b} interpenetrate")
        return self

    def board(self, board_id: str) -> BoardSpec:
        try:
            return self.boards[board_id]
        except KeyError:
            raise SceneError(f"unknown board id {board_id!r}") from None

    def finished_boxes(self) -> list:
        return [b.obb(p) for b, p in self.finished]

    def waiting_boxes(self, current: str) -> list:
        """Boards still at their initial pose when ``current`` is being handled."""
        done = {b.id for b, _ in self.finished}
        return [self.boards[b].obb(self.initial_poses[b]) for b in self.sequence
                if b != current and b not in done]

    def placement_obstacles(self, current: str) -> BoxSet:
        """Volumes a board pose may not intersect (finished assembly and environment)."""
        return BoxSet.of(self.finished_boxes() + self.fixtures + self.human.body
                         + self.robot.body + self.waiting_boxes(current))

    def robot_obstacles(self, current: str, extra=()) -> BoxSet:
        return BoxSet.of(self.finished_boxes() + self.fixtures + self.human.body
                         + self.robot.body + self.waiting_boxes(current) + list(extra))

    def human_obstacles(self) -> BoxSet:
        return BoxSet.of(self.finished_boxes() + self.fixtures)


def default_robot_effector() -> EndEffector:
    return ROBOT_GRIPPER


def default_human_effector() -> EndEffector:
    return HUMAN_HAND


def arm_with_base(chain: SerialChain, base: Pose) -> SerialChain:
    return chain.with_base(base @ chain.base)


def obb_from_record(rec: dict, where: str) -> OBB:
    from .records import parse_vector, pose_from_record
    if "center" in rec:
        pose = Pose(parse_vector(rec["center"], 3, f"{where}.center"))
        if "quaternion" in rec:
            pose = Pose(pose.p, pose_from_record({"quaternion": rec["quaternion"]}, where).R)
    else:
        pose = pose_from_record(rec, where)
    half = parse_vector(rec.get("half_extents"), 3, f"{where}.half_extents")
    if np.any(half <= 0):
        raise SceneError(f"{where}.half_extents must be positive")
    return OBB(pose.p, pose.R, half, str(rec.get("name", "")))
