"""A smooth, sticking stance phase of the hopper used for order estimates."""

import numpy as np

from exposim.bench import hopper_equilibrium
from exposim.contact import make_contacts
from exposim.integrators import rk4_step, step
from exposim.mechanics import PlanarHopper, RobotState

K, B = 1e5, 300.0


def hopper_stance():
    model = PlanarHopper()
    q, tau = hopper_equilibrium(model, 0.6, K)
    contacts = make_contacts(model, K, B, 1e6)
    contacts[0].active = True
    v = np.array([0.05, -0.02, 0.3, -0.4, 0.6])
    return model, contacts, RobotState(q, v), tau


def position_error(integrator, h, substeps=64):
    """Position error of one step of size h against fine-step RK4."""
    model, contacts, state, tau = hopper_stance()
    new, _, _ = step(integrator, model, contacts, state, tau, h)
    ref, cps = state, contacts
    for _ in range(substeps):
        ref, cps, _ = rk4_step(model, cps, ref, tau, h / substeps)
    return float(np.max(np.abs(model.configuration_difference(new.q, ref.q))))


def order_estimates(integrator, steps):
    """log2 ratios of successive local errors over a halving sequence."""
    errs = [position_error(integrator, h) for h in steps]
    return [float(np.log2(a / b)) for a, b in zip(errs, errs[1:])], errs
