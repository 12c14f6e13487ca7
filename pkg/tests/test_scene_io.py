import copy

import numpy as np
import pytest
import yaml

from collab_assembly.errors import SceneError
from collab_assembly.kinematics import load_chain
from collab_assembly.scene_io import load_scene, save_scene, scene_from_record, scene_to_record
from collab_assembly.workcell import Settings
from helpers import LARGE, MEDIUM, SMALL, cabinet

KINDS = {"large": LARGE, "medium": MEDIUM, "small": SMALL}


def _record():
    return copy.deepcopy(scene_to_record(cabinet()))


def test_bundled_cabinet_has_the_seven_boards():
    s = cabinet()
    assert s.sequence == ["base", "lateral_right", "back_left", "lateral_left", "shelf", "top", "back_right"]
    assert [b.kind for b in s.boards.values()].count("medium") == 3
    for b in s.boards.values():
        L, W, T, m = KINDS[b.kind]
        assert (b.length, b.width, b.thickness, b.mass) == (L, W, T, m)


def test_save_load_roundtrip_is_exact(tmp_path):
    s = cabinet()
    path = tmp_path / "scene.yaml"
    save_scene(s, path)
    t = load_scene(path)
    assert t.sequence == s.sequence and t.settings == s.settings
    assert t.robot.grip_force == s.robot.grip_force
    for bid in s.sequence:
        assert t.boards[bid] == s.boards[bid]
        assert np.array_equal(t.initial_poses[bid].p, s.initial_poses[bid].p)
        assert t.assembly_poses[bid].allclose(s.assembly_poses[bid], atol=1e-15)
    for a, b in zip(t.fixtures, s.fixtures):
        assert np.array_equal(a.center, b.center) and np.allclose(a.R, b.R, atol=1e-15)
    # a second cycle is a fixed point of the writer
    save_scene(t, tmp_path / "again.yaml")
    assert (tmp_path / "again.yaml").read_text() == path.read_text()


def test_non_unit_quaternion_names_the_field():
    rec = _record()
    rec["boards"][2]["assembly_pose"]["quaternion"] = [1.0, 1.0, 0.0, 0.0]
    with pytest.raises(SceneError, match=r"boards\[2\]\.assembly_pose\.quaternion"):
        scene_from_record(rec)


def test_bad_values_are_reported():
    rec = _record()
    rec["boards"][0]["mass"] = -1.0
    with pytest.raises(SceneError, match=r"boards\[0\]"):
        scene_from_record(rec)
    rec = _record()
    rec["settings"]["warp_speed"] = 9
    with pytest.raises(SceneError, match="warp_speed"):
        scene_from_record(rec)
    rec = _record()
    rec["boards"].append(copy.deepcopy(rec["boards"][0]))
    with pytest.raises(SceneError, match="duplicate"):
        scene_from_record(rec)


def test_missing_settings_take_defaults():
    rec = _record()
    del rec["settings"]
    assert scene_from_record(rec).settings == Settings()
    rec["settings"] = {"goal_samples": 17, "max_rot": "30deg"}
    st = scene_from_record(rec).settings
    assert st.goal_samples == 17 and st.max_rot == pytest.approx(np.radians(30))


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "broken.yaml"
    p.write_text("name: x\nboards:\n  - id: a\n    length: [1, 2\n")
    with pytest.raises(SceneError, match="line"):
        load_scene(p)
    with pytest.raises(SceneError, match="not found"):
        load_scene(tmp_path / "nope.yaml")


def test_chain_file_roundtrip(tmp_path):
    c = load_chain("ur3.yaml")
    assert c.dof == 6 and len(c.joint_names) == 6
    assert np.all(c.limits[:, 0] < c.limits[:, 1])
    text = yaml.safe_dump({"name": "bad", "joints": [{"name": "j", "axis": [0, 0, 1],
                                                      "limits": [1.0, -1.0], "origin": {"xyz": [0, 0, 0]}}]})
    p = tmp_path / "bad_chain.yaml"
    p.write_text(text)
    with pytest.raises(SceneError):
        load_chain(str(p))
