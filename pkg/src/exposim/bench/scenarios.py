"""Benchmark scenarios: a model, an initial state, contact parameters and a controller."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from exposim.bench.controllers import ConstantInput, HopperBalance, hopper_equilibrium
from exposim.contact import ContactPointState, damping_from_ratio, damping_ratio, detect_and_update, make_contacts
from exposim.errors import ConfigError
from exposim.mechanics import FreeBox3D, Model, PlanarHopper, PointMass3D, RobotState, quat_exp

__all__ = ["BenchScenario", "SCENARIOS", "make_scenario", "DEFAULT_K", "DEFAULT_B", "DEFAULT_MU"]

DEFAULT_K = 1e5
DEFAULT_B = 300.0
DEFAULT_MU = 1.0

Controller = Callable[[float, RobotState], "np.ndarray | None"]


@dataclass
class BenchScenario:
    """A reproducible closed-loop experiment.

    ``controller_factory`` builds the controller for the current contact
    parameters, so the gains follow ``with_contact`` overrides.
    ``contacts0`` optionally presets the contact states at t = 0 (for a body
    that starts at rest on the ground); otherwise they come from the usual
    penetration test.
    """

    name: str
    model: Model
    state0: RobotState
    K: float = DEFAULT_K
    B: float = DEFAULT_B
    mu: float = DEFAULT_MU
    duration: float = 1.0
    dt_c: float = 0.01
    controller_factory: Callable[[BenchScenario], Controller] | None = None
    contacts0: Callable[[BenchScenario], list[ContactPointState]] | None = None

    def __post_init__(self):
        if not self.dt_c > 0:
            raise ConfigError("dt_c must be positive")
        if self.duration < self.dt_c * (1 - 1e-12):
            raise ConfigError("duration must be at least dt_c")
        if not self.K > 0 or self.B < 0 or self.mu < 0:
            raise ConfigError("contact parameters must satisfy K > 0, B >= 0, mu >= 0")
        self._controller = None

    @property
    def damping_ratio(self) -> float:
        return damping_ratio(self.K, self.B)

    @property
    def n_ticks(self) -> int:
        """Number of controller periods in the run."""
        return int(round(self.duration / self.dt_c))

    @property
    def controller(self) -> Controller | None:
        if self.controller_factory is None:
            return None
        if self._controller is None:
            self._controller = self.controller_factory(self)
        return self._controller

    def control(self, t: float, state: RobotState):
        ctrl = self.controller
        return None if ctrl is None else ctrl(t, state)

    def initial_contacts(self) -> list[ContactPointState]:
        if self.contacts0 is not None:
            return self.contacts0(self)
        contacts = make_contacts(self.model, self.K, self.B, self.mu)
        return detect_and_update(self.model, self.state0.q, self.state0.v, contacts)

    def with_contact(self, K=None, B=None, damping_ratio=None, mu=None) -> BenchScenario:
        """Copy with new contact parameters. Give at most one of B and damping_ratio."""
        if B is not None and damping_ratio is not None:
            raise ConfigError("give either B or damping_ratio, not both")
        K_new = self.K if K is None else float(K)
        if damping_ratio is not None:
            B_new = damping_from_ratio(K_new, damping_ratio)
        elif B is not None:
            B_new = float(B)
        else:
            B_new = self.B
        mu_new = self.mu if mu is None else float(mu)
        return replace(self, K=K_new, B=B_new, mu=mu_new)

    def with_timing(self, duration=None, dt_c=None) -> BenchScenario:
        return replace(
            self,
            duration=self.duration if duration is None else float(duration),
            dt_c=self.dt_c if dt_c is None else float(dt_c),
        )


# -- factories ------------------------------------------------------------------


def _mass_drop(**kw) -> BenchScenario:
    height = kw.pop("height", 0.01)
    model = PointMass3D(mass=kw.pop("mass", 1.0))
    state0 = RobotState(np.array([0.0, 0.0, height]), np.zeros(3))
    return BenchScenario("mass-drop", model, state0, duration=0.5, dt_c=0.01, **kw)


def _box_drop(**kw) -> BenchScenario:
    height = kw.pop("height", 0.08)
    tilt = np.asarray(kw.pop("tilt", (0.1, 0.05, 0.0)), dtype=float)
    model = FreeBox3D(mass=kw.pop("mass", 0.5))
    q0 = np.concatenate([[0.0, 0.0, height], quat_exp(tilt)])
    state0 = RobotState(q0, np.zeros(6))
    return BenchScenario("box-drop", model, state0, duration=2.0, dt_c=0.01, **kw)


def _resting_box_contacts(scenario: BenchScenario) -> list[ContactPointState]:
    model, q = scenario.model, scenario.state0.q
    kin = model.contact_kinematics(q, scenario.state0.v)
    contacts = make_contacts(model, scenario.K, scenario.B, scenario.mu)
    for cp, p in zip(contacts, kin.p):
        cp.active = True
        cp.p0[:] = (p[0], p[1], 0.0)
    return contacts


def _box_push(**kw) -> BenchScenario:
    model = FreeBox3D(mass=kw.pop("mass", 1.0))
    push = kw.pop("push", 1.25)
    K = kw.get("K", DEFAULT_K)
    sink = model.mass * model.gravity / (4.0 * K)
    q0 = np.concatenate([[0.0, 0.0, model.half_extents[2] - sink], [1.0, 0.0, 0.0, 0.0]])
    state0 = RobotState(q0, np.zeros(6))

    def controller(sc: BenchScenario):
        force = push * sc.mu * sc.model.mass * sc.model.gravity
        return ConstantInput(np.array([force, 0.0, 0.0, 0.0, 0.0, 0.0]))

    return BenchScenario(
        "box-push",
        model,
        state0,
        duration=0.5,
        dt_c=0.01,
        controller_factory=controller,
        contacts0=_resting_box_contacts,
        **kw,
    )


def _resting_hopper_contacts(scenario: BenchScenario) -> list[ContactPointState]:
    contacts = make_contacts(scenario.model, scenario.K, scenario.B, scenario.mu)
    foot = scenario.model.points(scenario.state0.q)["foot"]
    contacts[0].active = True
    contacts[0].p0[:] = (foot[0], 0.0, 0.0)
    return contacts


def _hopper(name: str, **kw) -> BenchScenario:
    knee0 = kw.pop("knee", 0.6)
    amplitude = kw.pop("amplitude", 0.1 if name == "hopper-squat" else 0.0)
    period = kw.pop("period", 2.0)
    drop = kw.pop("drop_height", 0.0 if name == "hopper-squat" else 0.03)
    model = PlanarHopper()
    K = kw.get("K", DEFAULT_K)
    q0, _ = hopper_equilibrium(model, knee0, K)
    q0[1] += drop

    def controller(sc: BenchScenario):
        return HopperBalance(sc.model, sc.K, sc.B, sc.dt_c, knee0=knee0, amplitude=amplitude, period=period)

    return BenchScenario(
        name,
        model,
        RobotState(q0, np.zeros(5)),
        duration=2.0,
        dt_c=0.01,
        controller_factory=controller,
        contacts0=_resting_hopper_contacts if drop == 0.0 else None,
        **kw,
    )


_FACTORIES = {
    "mass-drop": _mass_drop,
    "box-drop": _box_drop,
    "box-push": _box_push,
    "hopper-squat": lambda **kw: _hopper("hopper-squat", **kw),
    "hopper-hop": lambda **kw: _hopper("hopper-hop", **kw),
}

SCENARIOS = tuple(_FACTORIES)


def make_scenario(name: str, **overrides) -> BenchScenario:
    """Build a named scenario.

    Common overrides: K, B, damping_ratio, mu, duration, dt_c. Model-specific
    ones: height/mass (drops), tilt (box-drop), push (box-push, in units of
    mu m g), knee/amplitude/period/drop_height (hoppers).
    """
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None
    ratio = overrides.pop("damping_ratio", None)
    if ratio is not None:
        if "B" in overrides:
            raise ConfigError("give either B or damping_ratio, not both")
        overrides["B"] = damping_from_ratio(overrides.get("K", DEFAULT_K), ratio)
    timing = {k: overrides.pop(k) for k in ("duration", "dt_c") if k in overrides}
    sc = factory(**overrides)
    if timing:
        sc = sc.with_timing(**timing)
    if math.isclose(sc.duration / sc.dt_c, round(sc.duration / sc.dt_c), rel_tol=1e-9):
        return sc
    raise ConfigError("duration must be a whole number of controller periods")
