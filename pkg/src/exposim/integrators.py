"""Time steppers for multi-body systems with spring-damper contacts.

``expo_step`` integrates the stiff contact-point dynamics exactly with a matrix
exponential, freezing the slowly varying terms over the step, and feeds the
resulting time integrals of the contact forces into the robot velocity and
configuration updates. ``euler_explicit_step``, ``rk4_step`` and
``euler_implicit_step`` are the reference schemes.

All steppers share the contact policy: the active set is detected once at the
start of the step, forces are projected on the friction cone, and contacts
that slipped get their anchors reset from the end-of-step force.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.linalg.lapack

from exposim.contact import (
    ContactPointState,
    anchor_slip_update,
    detect_and_update,
    project_friction_cone,
    spring_damper_force,
)
from exposim.errors import IntegrationDiverged, SingularMassError
from exposim.expm_kernel import FULL, PadePolicy, compute_integrals, pade_expm
from exposim.mechanics import ContactKinematics, Model, RobotState

__all__ = [
    "INTEGRATORS",
    "ContactLDS",
    "StepReport",
    "continuous_dynamics",
    "build_contact_lds",
    "expo_step",
    "euler_explicit_step",
    "rk4_step",
    "euler_implicit_step",
    "step",
    "Simulation",
]

INTEGRATORS = ("expo", "euler-exp", "rk4", "euler-imp")

NEWTON_TOL = 1e-6
NEWTON_MAX_ITER = 20


@dataclass
class ContactLDS:
    """Linear contact-space dynamics d/dt x = A x + b, forces lambda = D x.

    ``x`` stacks the anchor-relative positions and velocities of the active
    contact points (k = 3 * active contacts entries each).
    """

    A: np.ndarray
    b: np.ndarray
    x0: np.ndarray
    D: np.ndarray
    Upsilon: np.ndarray
    vbar_dot: np.ndarray
    pbar_ddot: np.ndarray
    MinvJt: np.ndarray
    active: tuple[int, ...]

    @property
    def MinvJtD(self) -> np.ndarray:
        return self.MinvJt @ self.D

    def predicted_force(self, t: float, policy: PadePolicy = FULL) -> np.ndarray:
        """Contact forces at time ``t`` into the step, assuming constant A and b."""
        n = self.A.shape[0]
        if t == 0:
            return self.D @ self.x0
        # exp(t [[A, b], [0, 0]]) = [[exp(tA), int_0^t exp(sA) ds b], [0, 1]]
        aug = np.zeros((n + 1, n + 1))
        aug[:n, :n] = self.A
        aug[:n, n] = self.b
        E = pade_expm(t * aug, policy)
        x = E[:n, :n] @ self.x0 + E[:n, n]
        return self.D @ x


@dataclass
class StepReport:
    """Diagnostics of one step.

    Force vectors stack 3 entries per active contact. For ``expo``
    ``lam_mean``/``lam_mean2`` are the step averages of the predicted force;
    the reference schemes store their start-of-step force there.
    ``lam_applied`` is the (projected) force that drove the velocity update.
    ``iterations``, ``converged`` and ``residual`` (final infinity norm) are
    only meaningful for ``euler-imp``.
    """

    active: tuple[int, ...] = ()
    lam_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lam_mean2: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lam_applied: np.ndarray = field(default_factory=lambda: np.zeros(0))
    slipping: tuple[bool, ...] = ()
    iterations: int = 0
    converged: bool = True
    residual: float = 0.0
    wall_ns: int = 0
    lds: ContactLDS | None = None


# -- shared pieces ------------------------------------------------------------


_potrf, _potrs = scipy.linalg.lapack.get_lapack_funcs(("potrf", "potrs"), dtype=float)


def _factor_mass(M: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of M (upper triangle zeroed)."""
    L, info = _potrf(M, lower=1, clean=1)
    if info != 0:
        raise SingularMassError("mass matrix is not positive definite")
    return L


def _mass_solve(L: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    x, info = _potrs(L, rhs, lower=1)
    return x


def _check(state: RobotState) -> RobotState:
    if not state.is_finite():
        raise IntegrationDiverged("non-finite state")
    return state


def _ballistic(model: Model, state: RobotState, vdot: np.ndarray, dt: float) -> RobotState:
    v_new = state.v + dt * vdot
    q_new = model.integrate_configuration(state.q, dt * state.v + dt * dt / 2 * vdot)
    return RobotState(q_new, v_new)


def _active(contacts) -> tuple[int, ...]:
    return tuple(i for i, c in enumerate(contacts) if c.active)


def _stack_jacobian(kin: ContactKinematics, active) -> np.ndarray:
    return kin.J[list(active)].reshape(3 * len(active), -1)


def _contact_forces(contacts, active, kin: ContactKinematics, t_offset: float = 0.0):
    """Projected spring-damper forces of the active contacts.

    Anchors move with their own velocity for ``t_offset`` seconds, the
    constant-anchor-velocity assumption used inside a step.
    Returns (projected forces, raw forces, slip flags), forces stacked.
    """
    k = len(active)
    lam = np.empty(3 * k)
    raw = np.empty(3 * k)
    slip = []
    for j, i in enumerate(active):
        cp = contacts[i]
        f = -cp.K * (kin.p[i] - (cp.p0 + t_offset * cp.pd0)) - cp.B * (kin.pdot[i] - cp.pd0)
        chk = project_friction_cone(f, cp.mu)
        raw[3 * j : 3 * j + 3] = f
        lam[3 * j : 3 * j + 3] = chk.projected
        slip.append(not chk.inside)
    return lam, raw, slip


def _acceleration(model, contacts, active, q, v, tau, t_offset=0.0):
    M = model.mass_matrix(q)
    u = model.nonlinear_and_actuation(q, v, tau)
    chol = _factor_mass(M)
    if not active:
        return _mass_solve(chol, u), np.zeros(0), []
    kin = model.contact_kinematics(q, v)
    lam, _, slip = _contact_forces(contacts, active, kin, t_offset)
    J = _stack_jacobian(kin, active)
    return _mass_solve(chol, u + J.T @ lam), lam, slip


def _finish_contacts(model, contacts, active, slipping, new_state: RobotState, dt: float):
    """End-of-step anchor bookkeeping.

    Slipping contacts get their anchor reset from the projected end-of-step
    spring force. Sticking contacts that still carried an anchor velocity
    advance their anchor over the step and then stop it.
    """
    if not active:
        return contacts
    out = list(contacts)
    kin = None
    for j, i in enumerate(active):
        cp = contacts[i]
        if slipping[j]:
            if kin is None:
                kin = model.contact_kinematics(new_state.q, new_state.v)
            p, pd = kin.p[i], kin.pdot[i]
            lam = project_friction_cone(spring_damper_force(cp, p, pd), cp.mu).projected
            out[i] = anchor_slip_update(cp, p, pd, lam)
        elif cp.pd0[0] != 0.0 or cp.pd0[1] != 0.0:
            cp = cp.copy()
            cp.p0[:2] += dt * cp.pd0[:2]
            cp.pd0[:2] = 0.0
            out[i] = cp
    return out


# -- operations -----------------------------------------------------------------


def continuous_dynamics(
    model: Model,
    contacts: list[ContactPointState],
    state: RobotState,
    tau=None,
    t_offset: float = 0.0,
) -> np.ndarray:
    """Tangent-space time derivative (v, vdot) of the state.

    Only contacts flagged active exert forces; forces are projected on the
    friction cone.
    """
    active = _active(contacts)
    a, _, _ = _acceleration(model, contacts, active, state.q, state.v, tau, t_offset)
    return np.concatenate([state.v, a])


def _build_lds(contacts, active, kin, chol, vbar_dot) -> ContactLDS:
    J = _stack_jacobian(kin, active)
    k = J.shape[0]
    X = scipy.linalg.solve_triangular(chol, J.T, lower=True, check_finite=False)
    Upsilon = X.T @ X
    MinvJt = _mass_solve(chol, J.T)
    cps = [contacts[i] for i in active]
    Kd = np.concatenate([c.K for c in cps])
    Bd = np.concatenate([c.B for c in cps])
    idx = list(active)
    x0 = np.empty(2 * k)
    x0[:k] = kin.p[idx].ravel() - np.concatenate([c.p0 for c in cps])
    x0[k:] = kin.pdot[idx].ravel() - np.concatenate([c.pd0 for c in cps])
    pbar_ddot = J @ vbar_dot + kin.drift[idx].ravel()
    A = np.zeros((2 * k, 2 * k))
    r = np.arange(k)
    A[r, k + r] = 1.0
    A[k:, :k] = -Upsilon * Kd
    A[k:, k:] = -Upsilon * Bd
    b = np.zeros(2 * k)
    b[k:] = pbar_ddot
    D = np.zeros((k, 2 * k))
    D[r, r] = -Kd
    D[r, k + r] = -Bd
    return ContactLDS(
        A=A,
        b=b,
        x0=x0,
        D=D,
        Upsilon=Upsilon,
        vbar_dot=vbar_dot,
        pbar_ddot=pbar_ddot,
        MinvJt=MinvJt,
        active=tuple(active),
    )


def build_contact_lds(
    model: Model, contacts: list[ContactPointState], q: np.ndarray, v: np.ndarray, tau=None
) -> ContactLDS:
    """Contact-space linear system for the contacts currently flagged active."""
    active = _active(contacts)
    if not active:
        raise ValueError("build_contact_lds needs at least one active contact")
    chol = _factor_mass(model.mass_matrix(q))
    vbar = _mass_solve(chol, model.nonlinear_and_actuation(q, v, tau))
    return _build_lds(contacts, active, model.contact_kinematics(q, v), chol, vbar)


def expo_step(
    model: Model,
    contacts: list[ContactPointState],
    state: RobotState,
    tau,
    dt: float,
    policy: PadePolicy = FULL,
    keep_lds: bool = False,
):
    """One exponential-integrator step. Returns (state, contacts, StepReport)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    t0 = time.perf_counter_ns()
    q, v = state.q, state.v
    kin = model.contact_kinematics(q, v)
    contacts = detect_and_update(model, q, v, contacts, kin)
    active = _active(contacts)
    chol = _factor_mass(model.mass_matrix(q))
    vbar = _mass_solve(chol, model.nonlinear_and_actuation(q, v, tau))
    if not active:
        new = _check(_ballistic(model, state, vbar, dt))
        return new, contacts, StepReport(wall_ns=time.perf_counter_ns() - t0)

    lds = _build_lds(contacts, active, kin, chol, vbar)
    x_int, x_int2 = compute_integrals(lds.A, lds.b, lds.x0, dt, policy)
    lam_mean = lds.D @ x_int / dt
    lam_mean2 = lds.D @ x_int2 * (2.0 / (dt * dt))
    lam_pr = np.empty_like(lam_mean)
    lam_pr2 = np.empty_like(lam_mean2)
    slipping = []
    for j, i in enumerate(active):
        sl = slice(3 * j, 3 * j + 3)
        chk = project_friction_cone(lam_mean[sl], contacts[i].mu)
        lam_pr[sl] = chk.projected
        slipping.append(not chk.inside)
        lam_pr2[sl] = project_friction_cone(lam_mean2[sl], contacts[i].mu).projected
    vdot_pr = vbar + lds.MinvJt @ lam_pr
    vdot_pr2 = vbar + lds.MinvJt @ lam_pr2
    v_new = v + dt * vdot_pr
    v_mean = v + (dt / 2) * vdot_pr2
    new = _check(RobotState(model.integrate_configuration(q, dt * v_mean), v_new))
    contacts = _finish_contacts(model, contacts, active, slipping, new, dt)
    report = StepReport(
        active=active,
        lam_mean=lam_mean,
        lam_mean2=lam_mean2,
        lam_applied=lam_pr,
        slipping=tuple(slipping),
        lds=lds if keep_lds else None,
    )
    report.wall_ns = time.perf_counter_ns() - t0
    return new, contacts, report


def euler_explicit_step(model, contacts, state, tau, dt):
    """v+ = v + dt vdot, q+ = integrate(q, dt v + dt^2/2 vdot)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    t0 = time.perf_counter_ns()
    q, v = state.q, state.v
    kin = model.contact_kinematics(q, v)
    contacts = detect_and_update(model, q, v, contacts, kin)
    active = _active(contacts)
    chol = _factor_mass(model.mass_matrix(q))
    u = model.nonlinear_and_actuation(q, v, tau)
    if not active:
        vdot = _mass_solve(chol, u)
        new = _check(_ballistic(model, state, vdot, dt))
        return new, contacts, StepReport(wall_ns=time.perf_counter_ns() - t0)
    lam, raw, slip = _contact_forces(contacts, active, kin)
    J = _stack_jacobian(kin, active)
    vdot = _mass_solve(chol, u + J.T @ lam)
    new = _check(_ballistic(model, state, vdot, dt))
    contacts = _finish_contacts(model, contacts, active, slip, new, dt)
    report = StepReport(active, raw, raw, lam, tuple(slip), wall_ns=time.perf_counter_ns() - t0)
    return new, contacts, report


def rk4_step(model, contacts, state, tau, dt):
    """Classical Runge-Kutta with tangent-space stages and a frozen active set."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    t0 = time.perf_counter_ns()
    q, v = state.q, state.v
    contacts = detect_and_update(model, q, v, contacts)
    active = _active(contacts)
    integ = model.integrate_configuration

    a1, l1, s1 = _acceleration(model, contacts, active, q, v, tau)
    v2 = v + dt / 2 * a1
    a2, l2, s2 = _acceleration(model, contacts, active, integ(q, dt / 2 * v), v2, tau, dt / 2)
    v3 = v + dt / 2 * a2
    a3, l3, s3 = _acceleration(model, contacts, active, integ(q, dt / 2 * v2), v3, tau, dt / 2)
    v4 = v + dt * a3
    a4, l4, s4 = _acceleration(model, contacts, active, integ(q, dt * v3), v4, tau, dt)

    dq = dt / 6 * (v + 2 * v2 + 2 * v3 + v4)
    new = _check(RobotState(integ(q, dq), v + dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4)))
    slip = [any(f) for f in zip(s1, s2, s3, s4)]
    contacts = _finish_contacts(model, contacts, active, slip, new, dt)
    report = StepReport(
        active=active,
        lam_mean=l1,
        lam_mean2=l1,
        lam_applied=(l1 + 2 * l2 + 2 * l3 + l4) / 6,
        slipping=tuple(slip),
        wall_ns=time.perf_counter_ns() - t0,
    )
    return new, contacts, report


def euler_implicit_step(model, contacts, state, tau, dt, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER):
    """Backward Euler solved on the end-of-step velocity by damped Newton.

    Residual r(v+) = v+ - v - dt a(integrate(q, dt v+), v+), Jacobian by forward
    differences, step-halving line search. Failure to reach ``tol`` is reported
    through ``report.converged``; the best iterate is returned.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    t0 = time.perf_counter_ns()
    q, v = state.q, state.v
    contacts = detect_and_update(model, q, v, contacts)
    active = _active(contacts)
    nv = model.nv

    def residual(vp):
        qp = model.integrate_configuration(q, dt * vp)
        a, lam, slip = _acceleration(model, contacts, active, qp, vp, tau, dt)
        return vp - v - dt * a, qp, lam, slip

    vp = v.copy()
    r, qp, lam, slip = residual(vp)
    rnorm = np.max(np.abs(r)) if nv else 0.0
    iterations = 0
    while not rnorm <= tol and iterations < max_iter and np.isfinite(rnorm):
        Jr = np.empty((nv, nv))
        for j in range(nv):
            h = 1e-7 * max(1.0, abs(vp[j]))
            vh = vp.copy()
            vh[j] += h
            Jr[:, j] = (residual(vh)[0] - r) / h
        try:
            delta = np.linalg.solve(Jr, -r)
        except np.linalg.LinAlgError:
            break
        iterations += 1
        alpha = 1.0
        for _ in range(12):
            cand = vp + alpha * delta
            rc, qc, lc, sc = residual(cand)
            rcn = np.max(np.abs(rc))
            if rcn < rnorm:
                break
            alpha *= 0.5
        if not rcn < rnorm:
            break
        vp, r, qp, lam, slip, rnorm = cand, rc, qc, lc, sc, rcn

    converged = bool(rnorm <= tol)
    new = _check(RobotState(qp, vp))
    contacts = _finish_contacts(model, contacts, active, slip, new, dt)
    report = StepReport(
        active=active,
        lam_mean=lam,
        lam_mean2=lam,
        lam_applied=lam,
        slipping=tuple(slip),
        iterations=iterations,
        converged=converged,
        residual=float(rnorm),
        wall_ns=time.perf_counter_ns() - t0,
    )
    return new, contacts, report


def step(integrator: str, model, contacts, state, tau, dt, policy: PadePolicy = FULL):
    """Dispatch one step by integrator name."""
    if integrator == "expo":
        return expo_step(model, contacts, state, tau, dt, policy)
    if integrator == "euler-exp":
        return euler_explicit_step(model, contacts, state, tau, dt)
    if integrator == "rk4":
        return rk4_step(model, contacts, state, tau, dt)
    if integrator == "euler-imp":
        return euler_implicit_step(model, contacts, state, tau, dt)
    raise ValueError(f"unknown integrator {integrator!r}; choose from {INTEGRATORS}")


class Simulation:
    """A single-owner stepping context: model, contact states and robot state."""

    def __init__(self, model, state, contacts, integrator="expo", dt=1e-3, policy=FULL):
        if integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator {integrator!r}")
        self.model = model
        self.state = state.copy()
        self.contacts = [c.copy() for c in contacts]
        self.integrator = integrator
        self.dt = dt
        self.policy = PadePolicy.parse(policy)
        self.time = 0.0

    def step(self, tau=None) -> StepReport:
        self.state, self.contacts, report = step(
            self.integrator, self.model, self.contacts, self.state, tau, self.dt, self.policy
        )
        self.time += self.dt
        return report
