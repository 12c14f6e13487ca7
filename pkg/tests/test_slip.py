import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collab_assembly.contact import SoftFingerParams
from collab_assembly.errors import ForceBudgetExceeded
from collab_assembly.slip import (GRAVITY, GraspGeometry, SlipCache, _first_crossing, calibrate_grip_force,
                                  critical_inclination, gravity_torque, plate_geometry, relaxation_limit,
                                  slip_acceleration, slip_angle)
from helpers import MEDIUM, SMALL

EE = 0.20


def geom(kind, axis="transverse"):
    L, W, _, m = kind
    contact = (0.0, W / 2) if axis == "transverse" else (L / 2, 0.0)
    return plate_geometry(L, W, m, contact, EE)


geometries = st.builds(lambda e, d, m: GraspGeometry(e, d, m, m * (0.1 + d * d)),
                       st.floats(0.05, 0.4), st.floats(0.0, 0.4), st.floats(0.01, 5.0))


def test_torque_zero_at_level():
    g = geom(MEDIUM)
    for phi in np.linspace(0, np.pi, 7):
        assert gravity_torque(g, 0.0, phi) == 0.0


def test_torque_hand_value():
    g = GraspGeometry(0.20, 0.2935, 1.8, 1.0)
    assert gravity_torque(g, np.pi / 2, 0.0) == pytest.approx(1.8 * 9.81 / 2 * (0.20 + 0.2935), rel=1e-15)
    assert gravity_torque(g, np.radians(30), 0.0) == pytest.approx(0.5 * gravity_torque(g, np.pi / 2, 0.0),
                                                                   rel=1e-12)


@settings(max_examples=100)
@given(geometries)
def test_torque_strictly_increasing(g):
    t = np.radians(np.arange(1, 90))
    T = [gravity_torque(g, x, 0.0) for x in t]
    assert np.all(np.diff(T) > 0)


def test_slip_acceleration_examples():
    g = GraspGeometry(0.2, 0.1, 1.0, 0.05)
    assert slip_acceleration(g, 2.0, 2.0) == 0.0
    assert slip_acceleration(g, 1.0, 2.0) == 0.0
    assert slip_acceleration(g, 4.0, 2.0) == pytest.approx(40.0)


def test_slip_angle_gating():
    assert slip_angle(0.2, 0.4, 0.3) == 0.0
    assert slip_angle(0.6, 0.4, 0.4) == 0.4
    assert slip_angle(0.4, 0.4, 0.4) == 0.0


def test_critical_inclination_examples():
    g = geom(MEDIUM)
    top = gravity_torque(g, np.pi / 2, 0.0)
    assert critical_inclination(g, top * 1.01) == np.pi / 2
    assert critical_inclination(g, 0.0) == 0.0
    assert critical_inclination(g, top / 2) == pytest.approx(np.radians(30), abs=1e-4)


@settings(max_examples=100)
@given(geometries, st.floats(0.05, 0.95))
def test_critical_inclination_brackets(g, frac):
    budget = frac * gravity_torque(g, np.pi / 2, 0.0)
    tc = critical_inclination(g, budget)
    assert gravity_torque(g, tc - 1e-3, 0.0) <= budget
    assert gravity_torque(g, tc + 1e-3, 0.0) > budget


def test_scan_and_bisection_agree():
    rng = np.random.default_rng(0)
    for _ in range(100):
        g = GraspGeometry(rng.uniform(0.05, 0.4), rng.uniform(0, 0.4), rng.uniform(0.1, 4), 1.0)
        budget = rng.uniform(0, 1) * gravity_torque(g, np.pi / 2, 0.0)
        tc = critical_inclination(g, budget)
        scan = next((np.radians(d) for d in range(91) if gravity_torque(g, np.radians(d), 0.0) > budget),
                    np.pi / 2)
        assert abs(tc - scan) <= np.radians(1) + 1e-12


def test_relaxation_limit_examples():
    pads = SoftFingerParams()
    # the grip force calibrated on the medium board (the scene default)
    P = 4165.069377696574
    assert relaxation_limit(geom(SMALL), pads, P).relaxation_limit == pytest.approx(np.pi / 2)
    assert relaxation_limit(GraspGeometry(0.2, 0.3, 0.0, 0.0), pads, P).relaxation_limit == np.pi / 2
    Pc = calibrate_grip_force(geom(MEDIUM), pads, np.radians(62))
    tr = relaxation_limit(geom(MEDIUM), pads, Pc).relaxation_limit
    lo = relaxation_limit(geom(MEDIUM, "longitudinal"), pads, Pc).relaxation_limit
    assert tr > lo


def test_relaxation_record_and_curve():
    res = relaxation_limit(geom(MEDIUM), SoftFingerParams(), 4165.069377696574)
    assert len(res.torque_curve) == 91
    T = [row[1] for row in res.torque_curve]
    assert np.all(np.diff(T) >= 0)
    assert 0 <= res.relaxation_limit <= np.pi / 2
    rec = res.to_record()
    assert rec["relaxation_limit"] == res.relaxation_limit and len(rec["torque_curve"]) == 91


def test_force_budget_exceeded():
    with pytest.raises(ForceBudgetExceeded):
        relaxation_limit(GraspGeometry(0.2, 0.1, 100.0, 1.0), SoftFingerParams(), 1.0)


def test_calibration_hits_target():
    pads = SoftFingerParams()
    P = calibrate_grip_force(geom(MEDIUM), pads, np.radians(62))
    assert P == pytest.approx(4165.069377696574, rel=1e-9)
    assert np.degrees(relaxation_limit(geom(MEDIUM), pads, P).relaxation_limit) == pytest.approx(62, abs=0.01)


def test_limit_monotone_in_mass_and_offset():
    pads = SoftFingerParams()
    P = 4165.0
    masses = np.linspace(0.5, 3.0, 5)
    offsets = np.linspace(0.05, 0.35, 5)
    L = np.array([[relaxation_limit(GraspGeometry(EE, d, m, m * (0.05 + d * d)), pads, P).relaxation_limit
                   for d in offsets] for m in masses])
    assert np.all(np.diff(L, axis=0) <= 1e-12)
    assert np.all(np.diff(L, axis=1) <= 1e-12)


def test_first_crossing_when_positive_at_start():
    assert _first_crossing(lambda t: 1.0) == 0.0


def test_cache_is_race_free():
    cache = SlipCache()
    calls = []

    def compute():
        calls.append(1)
        return object()

    results = []
    threads = [threading.Thread(target=lambda: results.append(cache.get("k", compute))) for _ in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len({id(r) for r in results}) == 1


def test_weight_constant():
    assert GRAVITY == 9.81
