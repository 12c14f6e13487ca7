"""Soft-finger contact: limit ellipse and Winkler-foundation eccentricity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ForceBudgetExceeded


@dataclass(frozen=True)
class SoftFingerParams:
    mu: float = 0.8        # static friction coefficient
    h: float = 2e-3        # piercing depth, m
    K: float = 5e5         # elastic modulus, Pa
    r1: float = 0.015      # relative radius of the finger pad, m
    r2: float = 0.05       # relative radius of the object surface, m (flat-face proxy)

    def __post_init__(self):
        for name in ("mu", "h", "K", "r1", "r2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"soft-finger parameter {name} must be positive, got {v!r}")
        if self.mu > 2.0:
            raise ValueError(f"friction coefficient {self.mu} above sanity bound 2.0")


@dataclass(frozen=True)
class ContactState:
    f_t: float    # tangential friction force, N
    tau_n: float  # frictional moment about the contact normal, N m
    P: float      # normal pressure force, N


def eccentricity(params: SoftFingerParams, P: float) -> float:
    """e_n = 16/15 * sqrt(P h sqrt(r1 r2) / (K pi))."""
    if not P > 0:
        raise ValueError(f"normal force must be positive, got {P!r}")
    return 16.0 / 15.0 * np.sqrt(P * params.h * np.sqrt(params.r1 * params.r2) / (params.K * np.pi))


def limit_margin(state: ContactState, params: SoftFingerParams) -> float:
    """mu^2 P^2 - (f_t^2 + tau_n^2 / e_n^2); non-negative means no slip."""
    e = eccentricity(params, state.P)
    return (params.mu * state.P) ** 2 - (state.f_t ** 2 + (state.tau_n / e) ** 2)


def soft_finger_satisfied(state: ContactState, params: SoftFingerParams) -> tuple[bool, float]:
    margin = limit_margin(state, params)
    return margin >= 0.0, margin


def max_friction_torque(params: SoftFingerParams, P: float, f_t: float) -> float:
    """Largest moment about the normal a pad can hold while carrying ``f_t``."""
    cap = params.mu * P
    if f_t > cap:
        raise ForceBudgetExceeded(
            f"tangential load {f_t:.4g} N exceeds the friction cap mu*P = {cap:.4g} N")
    return eccentricity(params, P) * np.sqrt(cap * cap - f_t * f_t)
