"""Conversions between file records (plain dicts/lists) and domain values.

All lengths are meters and all angles radians.  Angle fields also accept a
string with an explicit unit suffix, e.g. ``"45deg"`` or ``"0.5 rad"``.
"""
from __future__ import annotations

import re

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import SceneError
from .se3 import Pose

_ANGLE_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*(deg|rad)?\s*$")


def parse_angle(value, where: str = "angle") -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        m = _ANGLE_RE.match(value)
        if m:
            x = float(m.group(1))
            return float(np.radians(x)) if m.group(2) == "deg" else x
    raise SceneError(f"{where}: cannot parse angle {value!r}")


def parse_float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SceneError(f"{where}: expected a number, got {value!r}")
    return float(value)


def parse_vector(value, n: int, where: str) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise SceneError(f"{where}: expected a list of {n} numbers, got {value!r}")
    return np.array([parse_float(v, f"{where}[{i}]") for i, v in enumerate(value)])


def pose_from_record(rec, where: str = "pose") -> Pose:
    """Accepts ``{position, quaternion}`` (w, x, y, z) or ``{xyz, rpy}``."""
    if not isinstance(rec, dict):
        raise SceneError(f"{where}: expected a mapping, got {rec!r}")
    if "quaternion" in rec or "position" in rec:
        p = parse_vector(rec.get("position", [0, 0, 0]), 3, f"{where}.position")
        q = parse_vector(rec.get("quaternion", [1, 0, 0, 0]), 4, f"{where}.quaternion")
        try:
            return Pose.from_quat(p, q)
        except ValueError as exc:
            raise SceneError(f"{where}.quaternion: {exc}") from None
    p = parse_vector(rec.get("xyz", [0, 0, 0]), 3, f"{where}.xyz")
    rpy = rec.get("rpy", [0, 0, 0])
    if not isinstance(rpy, (list, tuple)) or len(rpy) != 3:
        raise SceneError(f"{where}.rpy: expected three angles")
    angles = [parse_angle(a, f"{where}.rpy[{i}]") for i, a in enumerate(rpy)]
    # fixed-axis roll, pitch, yaw as in URDF
    R = Rotation.from_euler("xyz", angles).as_matrix()
    return Pose(p, R)


def pose_to_record(pose: Pose) -> dict:
    return {"position": [float(v) for v in pose.p],
            "quaternion": [float(v) for v in pose.quat()]}


def floats(values) -> list:
    return [float(v) for v in np.asarray(values, dtype=float).ravel()]
