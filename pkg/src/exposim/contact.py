"""Visco-elastic point contacts against the ground plane z = 0.

Each contact is a linear spring-damper attached to an anchor point. The anchor
is placed where the point first penetrates the ground, stays fixed while the
contact sticks, and is dragged along the surface when the force leaves the
Coulomb cone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from exposim.mechanics import ContactKinematics, Model

__all__ = [
    "ContactPointState",
    "FrictionConeCheck",
    "make_contacts",
    "detect_and_update",
    "spring_damper_force",
    "project_friction_cone",
    "anchor_slip_update",
    "damping_from_ratio",
    "damping_ratio",
    "damping_regime",
]

# Slack on the cone test; makes projection idempotent despite rounding
# (the absolute part covers subnormal forces).
_CONE_SLACK = 1e-12
_CONE_ABS_SLACK = 1e-300


def _vec3(x) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(x, dtype=float), (3,)).copy()
    return arr


@dataclass
class ContactPointState:
    K: np.ndarray
    B: np.ndarray
    mu: float
    active: bool = False
    p0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    pd0: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.K = _vec3(self.K)
        self.B = _vec3(self.B)
        self.p0 = _vec3(self.p0)
        self.pd0 = _vec3(self.pd0)
        if np.any(self.K <= 0):
            raise ValueError("contact stiffness must be positive")
        if np.any(self.B < 0):
            raise ValueError("contact damping must be non-negative")
        if self.mu < 0:
            raise ValueError("friction coefficient must be non-negative")

    def copy(self) -> ContactPointState:
        return replace(self, p0=self.p0.copy(), pd0=self.pd0.copy())


class FrictionConeCheck(NamedTuple):
    inside: bool
    projected: np.ndarray


def damping_from_ratio(K: float, ratio: float) -> float:
    """Damping B for a given ratio B / (2 sqrt(K)) (mass-free definition)."""
    return float(2.0 * ratio * np.sqrt(K))


def damping_ratio(K: float, B: float) -> float:
    return float(B / (2.0 * np.sqrt(K)))


def damping_regime(ratio: float) -> str:
    """Label of a damping ratio; 1 (to rounding) is the critically damped contact."""
    if abs(ratio - 1.0) <= 1e-9:
        return "critically damped"
    return "underdamped" if ratio < 1.0 else "overdamped"


def make_contacts(model: Model, K, B, mu: float) -> list[ContactPointState]:
    """Inactive contact states for every candidate point of ``model``."""
    return [ContactPointState(K=K, B=B, mu=mu) for _ in range(model.nc)]


def detect_and_update(
    model: Model,
    q: np.ndarray,
    v: np.ndarray,
    contacts: list[ContactPointState],
    kin: ContactKinematics | None = None,
) -> list[ContactPointState]:
    """Activate penetrating points and release points above the ground.

    A new contact gets its anchor at the ground projection of the point and a
    zero anchor velocity. Returns a new list; the input is not modified.
    """
    if len(contacts) != model.nc:
        raise ValueError(f"expected {model.nc} contact states, got {len(contacts)}")
    if kin is None:
        kin = model.contact_kinematics(q, v)
    out = []
    for cp, p in zip(contacts, kin.p):
        if not cp.active and p[2] < 0.0:
            cp = replace(cp, active=True, p0=np.array([p[0], p[1], 0.0]), pd0=np.zeros(3))
        elif cp.active and p[2] > 0.0:
            cp = replace(cp, active=False)
        out.append(cp)
    return out


def spring_damper_force(cp: ContactPointState, p: np.ndarray, pdot: np.ndarray) -> np.ndarray:
    return -cp.K * (p - cp.p0) - cp.B * (pdot - cp.pd0)


def project_friction_cone(lam: np.ndarray, mu: float) -> FrictionConeCheck:
    """Map a contact force into the cone f_z >= 0, |f_t| <= mu f_z.

    Pulling forces become zero. Otherwise the normal component is kept and the
    tangential pair is shrunk onto the cone boundary.
    """
    lam = np.asarray(lam, dtype=float)
    fz = lam[2]
    if fz < 0.0:
        return FrictionConeCheck(False, np.zeros(3))
    ft = np.hypot(lam[0], lam[1])
    limit = mu * fz
    if ft <= limit * (1.0 + _CONE_SLACK) + _CONE_ABS_SLACK:
        return FrictionConeCheck(True, lam.copy())
    scale = limit / ft
    return FrictionConeCheck(False, np.array([lam[0] * scale, lam[1] * scale, fz]))


def anchor_slip_update(
    cp: ContactPointState, p: np.ndarray, pdot: np.ndarray, lam_post: np.ndarray
) -> ContactPointState:
    """Move the tangential anchor so the spring force equals ``lam_post``.

    The tangential anchor velocity is set to the point velocity, which cancels
    the tangential damping term. Normal anchor components are untouched.
    """
    p0 = cp.p0.copy()
    pd0 = cp.pd0.copy()
    pd0[:2] = pdot[:2]
    p0[:2] = p[:2] + lam_post[:2] / cp.K[:2]
    return replace(cp, p0=p0, pd0=pd0)
