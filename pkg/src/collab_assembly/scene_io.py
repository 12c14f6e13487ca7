"""Scene files: YAML in, YAML out.

Reals are written with Python's shortest round-trip representation, so a
load/save/load cycle reproduces every float bit for bit.
"""
from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
import yaml

from .collision import OBB
from .contact import SoftFingerParams
from .errors import SceneError
from .grasping import HUMAN_HAND, ROBOT_GRIPPER, Arm, BoardSpec, EndEffector
from .kinematics import bundled_path, chain_from_record, load_chain_file
from .se3 import matrix_to_quat
from .records import floats, parse_angle, parse_float, pose_from_record, pose_to_record
from .workcell import HumanModel, RobotModel, Scene, Settings, obb_from_record

ROBOT_PADS = SoftFingerParams()
# effective pad values for the human hand; see README for the calibration note
HUMAN_PADS = SoftFingerParams(mu=0.8, h=0.01, K=5.0, r1=0.04, r2=0.05)
ROBOT_GRIP_FORCE = 40.0
HUMAN_GRIP_FORCE = 25.0
_ANGLE_SETTINGS = {"max_rot", "constraint_margin"}
_INT_SETTINGS = {"goal_samples", "shortcut_attempts", "max_handover_attempts", "seed"}
_STR_SETTINGS = {"inclination_mode"}


def _mapping(rec, where):
    if rec is None:
        return {}
    if not isinstance(rec, dict):
        raise SceneError(f"{where}: expected a mapping")
    return rec


def _resolve(path_text: str, base_dir: Path) -> Path:
    p = Path(path_text)
    if not p.is_absolute() and (base_dir / p).exists():
        return base_dir / p
    if p.exists():
        return p
    b = bundled_path(path_text)
    if b.exists():
        return b
    raise SceneError(f"referenced file {path_text!r} not found")


def settings_from_record(rec) -> Settings:
    rec = _mapping(rec, "settings")
    names = {f.name for f in dataclasses.fields(Settings)}
    kw = {}
    for k, v in rec.items():
        where = f"settings.{k}"
        if k not in names:
            raise SceneError(f"{where}: unknown setting")
        if k in _ANGLE_SETTINGS:
            kw[k] = parse_angle(v, where)
        elif k in _INT_SETTINGS:
            if isinstance(v, bool) or not isinstance(v, int):
                raise SceneError(f"{where}: expected an integer")
            kw[k] = v
        elif k in _STR_SETTINGS:
            kw[k] = str(v)
        else:
            kw[k] = parse_float(v, where)
    return Settings(**kw)


def settings_to_record(s: Settings) -> dict:
    out = {}
    for f in dataclasses.fields(Settings):
        v = getattr(s, f.name)
        out[f.name] = v if isinstance(v, (int, str)) else float(v)
    return out


def pads_from_record(rec, default: SoftFingerParams, where: str) -> SoftFingerParams:
    if rec is None:
        return default
    rec = _mapping(rec, where)
    kw = {}
    for k, v in rec.items():
        if k not in ("mu", "h", "K", "r1", "r2"):
            raise SceneError(f"{where}.{k}: unknown pad parameter")
        kw[k] = parse_float(v, f"{where}.{k}")
    try:
        return dataclasses.replace(default, **kw)
    except ValueError as exc:
        raise SceneError(f"{where}: {exc}") from None


def pads_to_record(p: SoftFingerParams) -> dict:
    return {k: float(getattr(p, k)) for k in ("mu", "h", "K", "r1", "r2")}


def effector_from_record(rec, default: EndEffector, where: str) -> EndEffector:
    if rec is None:
        return default
    rec = _mapping(rec, where)
    kw = {}
    for k, v in rec.items():
        if k not in {f.name for f in dataclasses.fields(EndEffector)}:
            raise SceneError(f"{where}.{k}: unknown hand parameter")
        kw[k] = parse_float(v, f"{where}.{k}")
    return dataclasses.replace(default, **kw)


def effector_to_record(e: EndEffector) -> dict:
    return {f.name: float(getattr(e, f.name)) for f in dataclasses.fields(EndEffector)}


def _boxes(recs, where, frame=None) -> list:
    if recs is None:
        return []
    if not isinstance(recs, list):
        raise SceneError(f"{where}: expected a list")
    out = []
    for i, r in enumerate(recs):
        box = obb_from_record(_mapping(r, f"{where}[{i}]"), f"{where}[{i}]")
        out.append(box.transformed(frame) if frame is not None else box)
    return out


def _box_to_record(b: OBB) -> dict:
    rec = {"name": b.name, "center": floats(b.center)}
    rec["quaternion"] = floats(matrix_to_quat(b.R))
    rec["half_extents"] = floats(b.half)
    return rec


def _angles(values, where):
    return np.array([parse_angle(v, f"{where}[{i}]") for i, v in enumerate(values)])


def robot_from_record(rec, base_dir: Path) -> tuple[RobotModel, dict]:
    rec = _mapping(rec, "robot")
    chain_file = _resolve(str(rec.get("chain", "ur3.yaml")), base_dir)
    chain_rec = load_chain_file(chain_file)
    arms_rec = _mapping(rec.get("arms"), "robot.arms")
    gripper = effector_from_record(rec.get("gripper"), ROBOT_GRIPPER, "robot.gripper")
    arms, home = {}, {}
    for owner in ("robot-left", "robot-right"):
        a = _mapping(arms_rec.get(owner), f"robot.arms.{owner}")
        if not a:
            raise SceneError(f"robot.arms.{owner}: missing")
        chain = chain_from_record(chain_rec, chain_file.name)
        base = pose_from_record(a.get("base", {}), f"robot.arms.{owner}.base")
        chain = chain.with_base(base @ chain.base)
        arms[owner] = Arm(owner, chain, gripper)
        h = a.get("home")
        home[owner] = _angles(h, f"robot.arms.{owner}.home") if h is not None else chain.ik_seeds[0].copy()
        if len(home[owner]) != chain.dof or not chain.within_limits(home[owner]):
            raise SceneError(f"robot.arms.{owner}.home: not a valid configuration")
    suction = str(rec.get("suction_arm", "robot-right"))
    if suction not in arms:
        raise SceneError("robot.suction_arm must be robot-left or robot-right")
    grip = parse_float(rec.get("grip_force", ROBOT_GRIP_FORCE), "robot.grip_force")
    if not grip > 0:
        raise SceneError("robot.grip_force must be positive")
    robot = RobotModel(arms["robot-left"], arms["robot-right"],
                       pads_from_record(rec.get("pads"), ROBOT_PADS, "robot.pads"), grip,
                       _boxes(rec.get("body"), "robot.body"), suction, home=home)
    meta = {"chain": str(rec.get("chain", "ur3.yaml")),
            "bases": {o: arms_rec[o].get("base", {}) for o in arms}}
    return robot, meta


def human_from_record(rec, base_dir: Path) -> tuple[HumanModel, dict]:
    rec = _mapping(rec, "human")
    desc = str(rec.get("description", "human.yaml"))
    data = load_chain_file(_resolve(desc, base_dir))
    stance = pose_from_record(rec.get("stance", {}), "human.stance")
    hand = effector_from_record(rec.get("hand"), HUMAN_HAND, "human.hand")
    arms_rec = _mapping(data.get("arms"), f"{desc}.arms")
    arms = {}
    for side in ("left", "right"):
        chain = chain_from_record(arms_rec.get(side), f"{desc}.arms.{side}")
        arms[side] = Arm(f"human-{side}", chain.with_base(stance @ chain.base), hand)
    body = _boxes(data.get("body"), f"{desc}.body", stance)
    grip = parse_float(rec.get("grip_force", HUMAN_GRIP_FORCE), "human.grip_force")
    if not grip > 0:
        raise SceneError("human.grip_force must be positive")
    human = HumanModel(stance, arms["left"], arms["right"], body,
                       pads_from_record(rec.get("pads"), HUMAN_PADS, "human.pads"), grip, desc)
    return human, {"hand": hand}


def board_from_record(rec, where) -> tuple[BoardSpec, object, object]:
    rec = _mapping(rec, where)
    if "id" not in rec:
        raise SceneError(f"{where}.id: missing")
    try:
        board = BoardSpec(str(rec["id"]), parse_float(rec.get("length"), f"{where}.length"),
                          parse_float(rec.get("width"), f"{where}.width"),
                          parse_float(rec.get("thickness"), f"{where}.thickness"),
                          parse_float(rec.get("mass"), f"{where}.mass"), str(rec.get("kind", "")))
    except ValueError as exc:
        if isinstance(exc, SceneError):
            raise
        raise SceneError(f"{where}: {exc}") from None
    init = pose_from_record(rec.get("initial_pose"), f"{where}.initial_pose")
    goal = pose_from_record(rec.get("assembly_pose"), f"{where}.assembly_pose")
    return board, init, goal


def scene_from_record(rec, base_dir: Path = Path(".")) -> Scene:
    rec = _mapping(rec, "scene")
    robot, robot_meta = robot_from_record(rec.get("robot"), base_dir)
    tool = _mapping(rec.get("tool"), "tool")
    robot.tool_length = parse_float(tool.get("length", 0.15), "tool.length")
    robot.tool_radius = parse_float(tool.get("radius", 0.015), "tool.radius")
    if "initial_pose" in tool:
        robot.tool_initial_pose = pose_from_record(tool["initial_pose"], "tool.initial_pose")
    human, _ = human_from_record(rec.get("human"), base_dir)
    boards_rec = rec.get("boards")
    if not isinstance(boards_rec, list) or not boards_rec:
        raise SceneError("boards: expected a non-empty list")
    boards, init, goal = {}, {}, {}
    for i, b in enumerate(boards_rec):
        board, ip, gp = board_from_record(b, f"boards[{i}]")
        if board.id in boards:
            raise SceneError(f"boards[{i}].id: duplicate id {board.id!r}")
        boards[board.id], init[board.id], goal[board.id] = board, ip, gp
    seq = rec.get("sequence", [b.id for b in boards.values()])
    if not isinstance(seq, list):
        raise SceneError("sequence: expected a list of board ids")
    finished = []
    for i, f in enumerate(rec.get("finished") or []):
        f = _mapping(f, f"finished[{i}]")
        bid = str(f.get("board"))
        if bid not in boards:
            raise SceneError(f"finished[{i}].board: unknown board {bid!r}")
        finished.append((boards[bid], pose_from_record(f.get("pose", {}), f"finished[{i}].pose")))
    scene = Scene(robot, human, boards, init, goal, [str(s) for s in seq],
                  _boxes(rec.get("fixtures"), "fixtures"), settings_from_record(rec.get("settings")),
                  finished, str(rec.get("name", "scene")))
    scene.meta = {"robot": robot_meta, "human_stance": rec.get("human", {}).get("stance", {})}
    return scene.validate()


def load_scene(path) -> Scene:
    path = Path(path)
    if not path.exists():
        b = bundled_path(str(path))
        if not b.exists():
            raise SceneError(f"scene file {str(path)!r} not found")
        path = b
    try:
        with open(path) as fh:
            rec = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise SceneError(f"{path}: parse error{where}: {getattr(exc, 'problem', exc)}") from None
    return scene_from_record(rec, path.parent)


def scene_to_record(scene: Scene) -> dict:
    r = scene.robot
    meta = getattr(scene, "meta", {})
    robot_bases = {}
    for owner in ("robot-left", "robot-right"):
        chain = r.arm(owner).chain
        robot_bases[owner] = {"base": pose_to_record(chain.base),
                              "home": floats(r.home_config(owner))}
    rec = {
        "name": scene.name,
        "settings": settings_to_record(scene.settings),
        "robot": {
            "chain": meta.get("robot", {}).get("chain", "ur3.yaml"),
            # the bundled chain's own base is the identity, so world bases are stored directly
            "arms": robot_bases,
            "gripper": effector_to_record(r.left.effector),
            "pads": pads_to_record(r.pads),
            "grip_force": float(r.grip_force),
            "suction_arm": r.suction_arm,
            "body": [_box_to_record(b) for b in r.body],
        },
        "tool": {"length": float(r.tool_length), "radius": float(r.tool_radius),
                 "initial_pose": pose_to_record(r.tool_initial_pose)},
        "human": {"description": scene.human.description, "stance": pose_to_record(scene.human.stance),
                  "hand": effector_to_record(scene.human.left.effector),
                  "pads": pads_to_record(scene.human.pads), "grip_force": float(scene.human.grip_force)},
        "boards": [{"id": b.id, "kind": b.kind, "length": float(b.length), "width": float(b.width),
                    "thickness": float(b.thickness), "mass": float(b.mass),
                    "initial_pose": pose_to_record(scene.initial_poses[b.id]),
                    "assembly_pose": pose_to_record(scene.assembly_poses[b.id])}
                   for b in scene.boards.values()],
        "sequence": list(scene.sequence),
        "fixtures": [_box_to_record(b) for b in scene.fixtures],
    }
    if scene.finished:
        rec["finished"] = [{"board": b.id, "pose": pose_to_record(p)} for b, p in scene.finished]
    return rec


def save_scene(scene: Scene, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scene_to_record(scene), fh, sort_keys=False, default_flow_style=None)
