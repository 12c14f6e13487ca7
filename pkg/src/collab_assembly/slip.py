"""In-hand rotational slip: gravity torque, critical inclination, relaxation limit."""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .contact import SoftFingerParams, max_friction_torque
from .errors import ForceBudgetExceeded

GRAVITY = 9.81
HALF_PI = np.pi / 2.0
SCAN_STEP = np.radians(1.0)
BISECT_TOL = 1e-4


@dataclass(frozen=True)
class GraspGeometry:
    ee_length: float       # wrist reference to fingertip contact, m
    com_offset: float      # grasp contact to object CoM, m
    mass: float            # kg
    inertia_about_contact: float  # kg m^2, about the in-hand rotation axis

    def __post_init__(self):
        if min(self.ee_length, self.com_offset, self.mass, self.inertia_about_contact) < 0:
            raise ValueError("grasp geometry values must be non-negative")
        if self.mass > 0 and not self.inertia_about_contact > 0:
            raise ValueError("a massive object needs a positive moment of inertia")


@dataclass(frozen=True)
class SlipAnalysis:
    theta_c: float
    relaxation_limit: float
    torque_curve: tuple          # ((theta, T_g, budget), ...) at 1 degree steps
    friction_budget: float       # 2 * max friction torque at theta_c (or at 90 deg)

    def to_record(self) -> dict:
        return {
            "theta_c": self.theta_c,
            "relaxation_limit": self.relaxation_limit,
            "friction_budget": self.friction_budget,
            "torque_curve": [list(map(float, row)) for row in self.torque_curve],
        }


def plate_geometry(length: float, width: float, mass: float, contact_xy, ee_length: float) -> GraspGeometry:
    """Geometry of a thin rectangular plate pinched at ``contact_xy`` (CoM frame)."""
    d = float(np.hypot(*contact_xy))
    inertia = mass * (length ** 2 + width ** 2) / 12.0 + mass * d * d
    return GraspGeometry(ee_length, d, mass, inertia)


def gravity_torque(g: GraspGeometry, theta: float, phi: float = 0.0) -> float:
    w = g.mass * GRAVITY / 2.0
    st = np.sin(theta)
    return (w * st * np.sin(phi) * (g.com_offset * np.sin(phi))
            + w * st * np.cos(phi) * (g.ee_length + g.com_offset * np.cos(phi)))


def slip_acceleration(g: GraspGeometry, T_g: float, friction_budget: float) -> float:
    """Angular acceleration of in-hand slip; friction is reactive so never negative."""
    if not g.inertia_about_contact > 0:
        raise ValueError("moment of inertia must be positive")
    return max(0.0, (T_g - friction_budget) / g.inertia_about_contact)


def slip_angle(theta: float, theta_c: float, phi_rest: float) -> float:
    # the tie theta == theta_c stays on the no-slip branch
    return phi_rest if theta > theta_c else 0.0


def _first_crossing(excess, lo: float = 0.0, hi: float = HALF_PI) -> float:
    """Smallest theta in [lo, hi] with excess(theta) > 0, else hi.

    A 1 degree scan brackets the crossing, bisection refines it.
    """
    e0 = excess(lo)
    # balanced at lo and tipping right after it: slip starts immediately
    if e0 > 0 or (e0 == 0 and excess(min(lo + BISECT_TOL, hi)) > 0):
        return lo
    n = int(np.ceil((hi - lo) / SCAN_STEP - 1e-9))
    grid = np.minimum(lo + SCAN_STEP * np.arange(n + 1), hi)
    prev = grid[0]
    for t in grid[1:]:
        if excess(t) > 0:
            a, b = prev, t
            while b - a > BISECT_TOL:
                m = 0.5 * (a + b)
                if excess(m) > 0:
                    b = m
                else:
                    a = m
            return b
        prev = t
    return hi


def critical_inclination(g: GraspGeometry, friction_budget: float) -> float:
    return _first_crossing(lambda t: gravity_torque(g, t, 0.0) - friction_budget)


def tangential_load(g: GraspGeometry, theta: float) -> float:
    """Per-finger in-plane gravity load, shared evenly by the two pads."""
    return g.mass * GRAVITY * np.sin(theta) / 2.0


def friction_budget_at(g: GraspGeometry, params: SoftFingerParams, P: float, theta: float) -> float:
    return 2.0 * max_friction_torque(params, P, tangential_load(g, theta))


def relaxation_limit(g: GraspGeometry, params: SoftFingerParams, grip_force_P: float) -> SlipAnalysis:
    if tangential_load(g, HALF_PI) > params.mu * grip_force_P:
        raise ForceBudgetExceeded(
            f"object weight {g.mass * GRAVITY:.3g} N exceeds the two-pad friction cap "
            f"{2 * params.mu * grip_force_P:.3g} N")

    def excess(t):
        return gravity_torque(g, t, 0.0) - friction_budget_at(g, params, grip_force_P, t)

    theta_c = _first_crossing(excess)
    curve = []
    for deg in range(91):
        t = np.radians(deg)
        curve.append((t, gravity_torque(g, t, 0.0), friction_budget_at(g, params, grip_force_P, t)))
    budget = friction_budget_at(g, params, grip_force_P, theta_c)
    return SlipAnalysis(theta_c, theta_c, tuple(curve), budget)


def calibrate_grip_force(g: GraspGeometry, params: SoftFingerParams, target_limit: float,
                         lo: float = 1.0, hi: float = 1e6) -> float:
    """Grip force whose relaxation limit for ``g`` equals ``target_limit``."""

    def f(P):
        # ignore the 1e-4 bisection granularity by solving the torque balance directly
        return (friction_budget_at(g, params, P, target_limit)
                - gravity_torque(g, target_limit, 0.0))

    lo = max(lo, g.mass * GRAVITY * np.sin(target_limit) / (2.0 * params.mu) * (1 + 1e-12))
    return float(brentq(f, lo, hi, xtol=1e-10, rtol=1e-14))


class SlipCache:
    """Thread-safe memo of slip analyses keyed by (board id, grasp key)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._data: dict = {}

    def get(self, key, compute):
        with self._lock:
            if key in self._data:
                return self._data[key]
        value = compute()
        with self._lock:
            return self._data.setdefault(key, value)
