"""Feedback controllers used by the benchmark scenarios.

A controller is any callable ``(t, state) -> tau`` (or ``None`` for no input).
Inputs are held constant over a controller period by the runner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import brentq

from exposim.contact import make_contacts
from exposim.expm_kernel import pade_expm
from exposim.integrators import continuous_dynamics
from exposim.mechanics import PlanarHopper, RobotState

__all__ = [
    "pd_controller",
    "PDController",
    "ConstantInput",
    "HopperBalance",
    "hopper_equilibrium",
]


def pd_controller(kp, kd, q_des, q_act, v_act) -> np.ndarray:
    """tau = kp * (q_des - q_act) - kd * v_act, elementwise."""
    return np.asarray(kp) * (np.asarray(q_des) - np.asarray(q_act)) - np.asarray(kd) * np.asarray(v_act)


@dataclass
class PDController:
    """Joint-space PD on the actuated coordinates ``joints`` plus a feedforward."""

    kp: np.ndarray
    kd: np.ndarray
    q_des: np.ndarray
    joints: tuple[int, ...]
    tau_ff: np.ndarray | None = None

    def __call__(self, t: float, state: RobotState) -> np.ndarray:
        idx = list(self.joints)
        tau = pd_controller(self.kp, self.kd, self.q_des, state.q[idx], state.v[idx])
        if self.tau_ff is not None:
            tau = tau + self.tau_ff
        return tau


@dataclass
class ConstantInput:
    tau: np.ndarray

    def __call__(self, t: float, state: RobotState) -> np.ndarray:
        return np.array(self.tau, dtype=float)


def hopper_equilibrium(model: PlanarHopper, knee: float, K: float):
    """Static stance of the hopper with the given knee angle.

    The body is upright, the hip angle puts the total center of mass above the
    foot, and the foot sits at x = 0 with the spring penetration that carries
    the weight. Returns (q, tau_ff).
    """

    def com_minus_foot(hip):
        q = np.array([0.0, 0.0, 0.0, hip, knee])
        return model.center_of_mass(q)[0] - model.points(q)["foot"][0]

    if knee == 0.0:
        hip = 0.0
    else:
        lo, hi = sorted((-knee, -0.5 * knee))
        hip = brentq(com_minus_foot, lo, hi, xtol=1e-14, rtol=1e-14)
    q = np.array([0.0, 0.0, 0.0, hip, knee])
    foot = model.points(q)["foot"]
    weight = model.total_mass * model.gravity
    q[0] = -foot[0]
    q[1] = -foot[1] - weight / K
    kin = model.contact_kinematics(q, np.zeros(5))
    lam = np.array([0.0, 0.0, weight])
    gen = model.nonlinear_and_actuation(q, np.zeros(5)) + kin.J[0].T @ lam
    tau_ff = -gen[3:5]
    return q, tau_ff


@dataclass
class HopperBalance:
    """Discrete LQR balance around a (possibly moving) squat posture.

    The gain comes from the zero-order-hold discretization of the contact
    dynamics linearized at the nominal stance. The reference tracks the static
    equilibrium for ``knee(t) = knee0 + amplitude * sin(2 pi t / period)``.
    While the foot is in the air the gain is meaningless, so the joints are
    held on the reference posture by a soft PD instead.
    """

    model: PlanarHopper
    K: float
    B: float
    dt_c: float
    knee0: float = 0.6
    amplitude: float = 0.0
    period: float = 2.0
    q_weights: tuple = (1e3, 1e4, 1e3, 1e2, 1e2)
    v_weights: tuple = (1.0, 1.0, 1.0, 0.1, 0.1)
    r_weight: float = 1e-1
    flight_kp: float = 0.5
    flight_kd: float = 0.05
    gain: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        q_eq, tau_eq = hopper_equilibrium(self.model, self.knee0, self.K)
        A, Bm = self._linearize(q_eq, tau_eq)
        n, m = A.shape[0], Bm.shape[1]
        aug = np.zeros((n + m, n + m))
        aug[:n, :n] = A
        aug[:n, n:] = Bm
        E = pade_expm(self.dt_c * aug)
        Ad, Bd = E[:n, :n], E[:n, n:]
        Q = np.diag(np.concatenate([self.q_weights, self.v_weights]))
        R = self.r_weight * np.eye(m)
        P = scipy.linalg.solve_discrete_are(Ad, Bd, Q, R)
        self.gain = np.linalg.solve(R + Bd.T @ P @ Bd, Bd.T @ P @ Ad)

    def _linearize(self, q_eq, tau_eq):
        model = self.model
        contacts = make_contacts(model, self.K, self.B, mu=1e6)
        contacts[0].active = True
        contacts[0].p0[:] = 0.0

        def f(x, tau):
            return continuous_dynamics(model, contacts, RobotState(x[:5], x[5:]), tau)

        x_eq = np.concatenate([q_eq, np.zeros(5)])
        A = np.empty((10, 10))
        Bm = np.empty((10, 2))
        for j in range(10):
            h = 1e-7
            dx = np.zeros(10)
            dx[j] = h
            A[:, j] = (f(x_eq + dx, tau_eq) - f(x_eq - dx, tau_eq)) / (2 * h)
        for j in range(2):
            h = 1e-5
            du = np.zeros(2)
            du[j] = h
            Bm[:, j] = (f(x_eq, tau_eq + du) - f(x_eq, tau_eq - du)) / (2 * h)
        return A, Bm

    def knee(self, t: float) -> float:
        return self.knee0 + self.amplitude * np.sin(2 * np.pi * t / self.period)

    def reference(self, t: float):
        """(q_ref, v_ref, tau_ff) at time t."""
        q_ref, tau_ff = hopper_equilibrium(self.model, self.knee(t), self.K)
        if self.amplitude == 0.0:
            return q_ref, np.zeros(5), tau_ff
        h = 1e-4
        qp, _ = hopper_equilibrium(self.model, self.knee(t + h), self.K)
        qm, _ = hopper_equilibrium(self.model, self.knee(t - h), self.K)
        return q_ref, (qp - qm) / (2 * h), tau_ff

    def __call__(self, t: float, state: RobotState) -> np.ndarray:
        q_ref, v_ref, tau_ff = self.reference(t)
        if self.model.points(state.q)["foot"][1] > 0.0:
            return pd_controller(self.flight_kp, self.flight_kd, q_ref[3:], state.q[3:], state.v[3:])
        err = np.concatenate([state.q - q_ref, state.v - v_ref])
        return tau_ff - self.gain @ err
