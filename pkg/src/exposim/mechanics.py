"""Mechanical models: mass matrix, bias forces, contact kinematics, configuration updates.

Every model exposes the same small interface so the integrators never need to
know which one they are stepping. Configurations may live on a manifold (the
free box carries a unit quaternion); velocities and configuration increments
are always plain vectors of length ``nv``.

Units are SI. Gravity points along -z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GRAVITY = 9.81

__all__ = [
    "GRAVITY",
    "RobotState",
    "ModelInfo",
    "ContactKinematics",
    "Model",
    "PointMass3D",
    "FreeBox3D",
    "PlanarHopper",
    "quat_multiply",
    "quat_exp",
    "quat_log",
    "quat_to_matrix",
    "make_model",
]


@dataclass
class RobotState:
    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.v = np.asarray(self.v, dtype=float)

    def copy(self) -> RobotState:
        return RobotState(self.q.copy(), self.v.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.v)))


@dataclass(frozen=True)
class ModelInfo:
    nq: int
    nv: int
    nc: int
    na: int
    contact_names: tuple[str, ...] = ()


@dataclass
class ContactKinematics:
    """Kinematics of every candidate contact point, stacked along the first axis.

    ``p``, ``pdot`` and ``drift`` have shape (nc, 3); ``J`` has shape (nc, 3, nv)
    and ``drift`` is the product Jdot @ v.
    """

    p: np.ndarray
    pdot: np.ndarray
    J: np.ndarray
    drift: np.ndarray


# -- quaternion helpers (scalar first) ---------------------------------------


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_exp(omega: np.ndarray) -> np.ndarray:
    """Unit quaternion of the rotation by vector ``omega`` (axis times angle)."""
    angle = float(np.sqrt(omega @ omega))
    half = 0.5 * angle
    if angle < 1e-8:
        # sin(x/2)/x to second order
        k = 0.5 - angle * angle / 48.0
    else:
        k = np.sin(half) / angle
    return np.array([np.cos(half), k * omega[0], k * omega[1], k * omega[2]])


def quat_log(quat: np.ndarray) -> np.ndarray:
    """Rotation vector of a unit quaternion, angle in [0, pi]."""
    w = quat[0]
    vec = quat[1:]
    if w < 0:
        w, vec = -w, -vec
    s = float(np.sqrt(vec @ vec))
    if s < 1e-8:
        return 2.0 * vec / w
    return 2.0 * np.arctan2(s, w) / s * vec


def quat_to_matrix(quat: np.ndarray) -> np.ndarray:
    w, x, y, z = quat
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


_EYE3 = np.eye(3)
_ZERO5 = np.zeros(5)


def _skew(r: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -r[2], r[1]], [r[2], 0.0, -r[0]], [-r[1], r[0], 0.0]])


# -- models -------------------------------------------------------------------


class Model:
    """Base class with Euclidean configuration handling.

    Subclasses set ``nq``, ``nv``, ``nc``, ``na`` and implement the dynamics
    terms. ``tau`` always has length ``na``; ``actuation`` maps it to
    generalized forces.
    """

    name = "model"
    nq = nv = nc = na = 0
    contact_names: tuple[str, ...] = ()
    gravity = GRAVITY

    @property
    def info(self) -> ModelInfo:
        return ModelInfo(self.nq, self.nv, self.nc, self.na, tuple(self.contact_names))

    @property
    def actuation(self) -> np.ndarray:
        """(nv, na) selection matrix from actuator inputs to generalized forces."""
        raise NotImplementedError

    def mass_matrix(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def nonlinear_and_actuation(self, q, v, tau=None) -> np.ndarray:
        raise NotImplementedError

    def contact_kinematics(self, q, v) -> ContactKinematics:
        raise NotImplementedError

    def integrate_configuration(self, q: np.ndarray, dq: np.ndarray) -> np.ndarray:
        return q + dq

    def configuration_difference(self, q1: np.ndarray, q0: np.ndarray) -> np.ndarray:
        """Tangent vector d with integrate_configuration(q0, d) == q1."""
        return q1 - q0

    def state_difference(self, x1: RobotState, x2: RobotState) -> np.ndarray:
        return np.concatenate([self.configuration_difference(x1.q, x2.q), x1.v - x2.v])

    def kinetic_energy(self, q, v) -> float:
        return 0.5 * float(v @ self.mass_matrix(q) @ v)

    def potential_energy(self, q) -> float:
        raise NotImplementedError

    def energy(self, state: RobotState) -> float:
        return self.kinetic_energy(state.q, state.v) + self.potential_energy(state.q)

    def neutral_configuration(self) -> np.ndarray:
        return np.zeros(self.nq)

    def _tau(self, tau) -> np.ndarray:
        if tau is None:
            return np.zeros(self.na)
        tau = np.asarray(tau, dtype=float)
        if tau.shape != (self.na,):
            raise ValueError(f"{self.name}: expected {self.na} actuator inputs, got shape {tau.shape}")
        return tau


class PointMass3D(Model):
    """A point mass with a single contact point at its position.

    The actuator input is an external world-frame force.
    """

    name = "point-mass"
    nq = nv = 3
    nc = 1
    na = 3
    contact_names = ("mass",)

    def __init__(self, mass: float = 1.0):
        if mass <= 0:
            raise ValueError("mass must be positive")
        self.mass = float(mass)
        self._M = self.mass * np.eye(3)

    @property
    def actuation(self):
        return np.eye(3)

    def mass_matrix(self, q):
        return self._M.copy()

    def nonlinear_and_actuation(self, q, v, tau=None):
        u = self._tau(tau).copy()
        u[2] -= self.mass * self.gravity
        return u

    def contact_kinematics(self, q, v):
        return ContactKinematics(
            p=np.asarray(q, dtype=float).reshape(1, 3).copy(),
            pdot=np.asarray(v, dtype=float).reshape(1, 3).copy(),
            J=np.eye(3).reshape(1, 3, 3),
            drift=np.zeros((1, 3)),
        )

    def potential_energy(self, q):
        return self.mass * self.gravity * float(q[2])


def _solid_box_inertia(mass: float, half_extents) -> np.ndarray:
    hx, hy, hz = half_extents
    return mass / 3.0 * np.array([hy * hy + hz * hz, hx * hx + hz * hz, hx * hx + hy * hy])


class FreeBox3D(Model):
    """Free-floating rigid box touching the ground with its four bottom corners.

    q = (position, quaternion w-x-y-z), v = (world linear velocity, body angular
    velocity). The actuator input is a wrench: world force then body torque,
    both applied at the center of mass.
    """

    name = "free-box"
    nq = 7
    nv = 6
    nc = 4
    na = 6
    contact_names = ("corner_mm", "corner_pm", "corner_mp", "corner_pp")

    def __init__(self, mass: float = 1.0, inertia=None, half_extents=(0.1, 0.1, 0.05)):
        if mass <= 0:
            raise ValueError("mass must be positive")
        self.mass = float(mass)
        self.half_extents = np.asarray(half_extents, dtype=float)
        if inertia is None:
            inertia = _solid_box_inertia(self.mass, self.half_extents)
        self.inertia = np.asarray(inertia, dtype=float)
        if self.inertia.shape != (3,) or np.any(self.inertia <= 0):
            raise ValueError("inertia must be a positive 3-vector (principal moments)")
        hx, hy, hz = self.half_extents
        self.corners = np.array([[-hx, -hy, -hz], [hx, -hy, -hz], [-hx, hy, -hz], [hx, hy, -hz]])
        self._corner_skews = np.array([_skew(r) for r in self.corners])
        self._M = np.diag(np.concatenate([np.full(3, self.mass), self.inertia]))

    @property
    def actuation(self):
        return np.eye(6)

    def neutral_configuration(self):
        return np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])

    def mass_matrix(self, q):
        return self._M.copy()

    def nonlinear_and_actuation(self, q, v, tau=None):
        tau = self._tau(tau)
        w = v[3:]
        u = np.empty(6)
        u[:3] = tau[:3]
        u[2] -= self.mass * self.gravity
        u[3:] = tau[3:] - _skew(w) @ (self.inertia * w)
        return u

    def contact_kinematics(self, q, v):
        R = quat_to_matrix(q[3:])
        W = _skew(v[3:])
        p = q[:3] + self.corners @ R.T
        wxr = self.corners @ W.T  # body-frame omega x r per corner
        pdot = v[:3] + wxr @ R.T
        drift = wxr @ (R @ W).T
        J = np.empty((4, 3, 6))
        J[:, :, :3] = _EYE3
        J[:, :, 3:] = -R @ self._corner_skews
        return ContactKinematics(p, pdot, J, drift)

    def integrate_configuration(self, q, dq):
        out = np.empty(7)
        out[:3] = q[:3] + dq[:3]
        quat = quat_multiply(q[3:], quat_exp(dq[3:]))
        out[3:] = quat / np.sqrt(quat @ quat)
        return out

    def configuration_difference(self, q1, q0):
        rel = quat_multiply(q0[3:] * np.array([1.0, -1.0, -1.0, -1.0]), q1[3:])
        return np.concatenate([q1[:3] - q0[:3], quat_log(rel)])

    def kinetic_energy(self, q, v):
        return 0.5 * self.mass * float(v[:3] @ v[:3]) + 0.5 * float(v[3:] @ (self.inertia * v[3:]))

    def potential_energy(self, q):
        return self.mass * self.gravity * float(q[2])


class PlanarHopper(Model):
    """Planar body with a two-link leg and a point foot.

    q = (x, z, pitch, hip, knee); all coordinates are Euclidean. Absolute link
    angles are measured from the downward vertical, positive towards +x, so a
    link at angle phi points along (sin phi, -cos phi) in the x-z plane. The
    body's center of mass sits at the hip. Links are uniform rods.
    """

    name = "planar-hopper"
    nq = nv = 5
    nc = 1
    na = 2
    contact_names = ("foot",)

    # d(phi_k)/dq for the two links
    _S = np.array([[0.0, 0.0, 1.0, 1.0, 0.0], [0.0, 0.0, 1.0, 1.0, 1.0]])

    def __init__(
        self,
        body_mass: float = 2.0,
        link_masses=(0.25, 0.25),
        link_lengths=(0.2, 0.2),
        body_inertia: float | None = None,
    ):
        self.body_mass = float(body_mass)
        self.link_masses = np.asarray(link_masses, dtype=float)
        self.link_lengths = np.asarray(link_lengths, dtype=float)
        if self.body_mass <= 0 or np.any(self.link_masses <= 0) or np.any(self.link_lengths <= 0):
            raise ValueError("masses and lengths must be positive")
        # default: a 0.2 m x 0.1 m slab
        self.body_inertia = (
            float(body_inertia) if body_inertia is not None else self.body_mass * (0.2**2 + 0.1**2) / 12.0
        )
        self.link_inertia = self.link_masses * self.link_lengths**2 / 12.0
        self.total_mass = self.body_mass + float(self.link_masses.sum())
        self._actuation = np.zeros((5, 2))
        self._actuation[3, 0] = self._actuation[4, 1] = 1.0
        l1, l2 = self.link_lengths
        self._arm_table = {"link1": (0.5 * l1, 0.0), "link2": (l1, 0.5 * l2), "foot": (l1, l2)}
        self._rot_inertia = sum(i * np.outer(S, S) for i, S in zip(self.link_inertia, self._S))
        self._rot_inertia[2, 2] += self.body_inertia

    @property
    def actuation(self):
        return self._actuation

    # Each tracked point is base + sum_k a[k] * e(phi_k).
    def _arms(self):
        return self._arm_table

    def _point(self, q, v, arms):
        a1, a2 = arms
        phi1 = q[2] + q[3]
        phi2 = phi1 + q[4]
        s1, c1, s2, c2 = math.sin(phi1), math.cos(phi1), math.sin(phi2), math.cos(phi2)
        w1 = v[2] + v[3]
        w2 = w1 + v[4]
        jx = a1 * c1 + a2 * c2
        jz = a1 * s1 + a2 * s2
        pos = np.array([q[0] + jz, q[1] - jx])
        J = np.array([[1.0, 0.0, jx, jx, a2 * c2], [0.0, 1.0, jz, jz, a2 * s2]])
        w1s, w2s = w1 * w1, w2 * w2
        drift = np.array([-(a1 * s1 * w1s + a2 * s2 * w2s), a1 * c1 * w1s + a2 * c2 * w2s])
        return pos, J, drift

    def points(self, q):
        """World positions (x, z) of the link centers of mass and the foot."""
        arms = self._arms()
        return {k: self._point(q, _ZERO5, a)[0] for k, a in arms.items()}

    def center_of_mass(self, q) -> np.ndarray:
        pts = self.points(q)
        m1, m2 = self.link_masses
        return (self.body_mass * q[:2] + m1 * pts["link1"] + m2 * pts["link2"]) / self.total_mass

    def mass_matrix(self, q):
        arms = self._arms()
        M = self._rot_inertia.copy()
        M[0, 0] += self.body_mass
        M[1, 1] += self.body_mass
        for k, name in enumerate(("link1", "link2")):
            _, J, _ = self._point(q, _ZERO5, arms[name])
            M += self.link_masses[k] * J.T @ J
        return M

    def nonlinear_and_actuation(self, q, v, tau=None):
        tau = self._tau(tau)
        arms = self._arms()
        g = self.gravity
        u = np.zeros(5)
        u[1] = -self.body_mass * g
        for k, name in enumerate(("link1", "link2")):
            _, J, drift = self._point(q, v, arms[name])
            m = self.link_masses[k]
            u += J.T @ (m * np.array([0.0, -g]) - m * drift)
        u += self._actuation @ tau
        return u

    def contact_kinematics(self, q, v):
        pos, J2, drift2 = self._point(q, v, self._arms()["foot"])
        J = np.zeros((1, 3, 5))
        J[0, 0] = J2[0]
        J[0, 2] = J2[1]
        pdot = J[0] @ v
        return ContactKinematics(
            p=np.array([[pos[0], 0.0, pos[1]]]),
            pdot=pdot.reshape(1, 3),
            J=J,
            drift=np.array([[drift2[0], 0.0, drift2[1]]]),
        )

    def potential_energy(self, q):
        pts = self.points(q)
        m1, m2 = self.link_masses
        return self.gravity * (self.body_mass * q[1] + m1 * pts["link1"][1] + m2 * pts["link2"][1])


def make_model(name: str, **params) -> Model:
    """Construct a built-in model by name (``point-mass``, ``free-box``, ``planar-hopper``)."""
    table = {"point-mass": PointMass3D, "free-box": FreeBox3D, "planar-hopper": PlanarHopper}
    try:
        cls = table[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(table)}") from None
    return cls(**params)
