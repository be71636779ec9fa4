"""Exponential integration of multi-body systems with stiff visco-elastic contacts."""

from exposim.errors import (
    ConfigError,
    DivergedGroundTruth,
    ExposimError,
    IntegrationDiverged,
    SingularDenominatorError,
    SingularMassError,
    StabilityNonMonotone,
)
from exposim.expm_kernel import FULL, PadePolicy, compute_integrals, expm_multiply, pade_expm
from exposim.integrators import INTEGRATORS, Simulation, step
from exposim.mechanics import FreeBox3D, PlanarHopper, PointMass3D, RobotState, make_model

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DivergedGroundTruth",
    "ExposimError",
    "FULL",
    "FreeBox3D",
    "INTEGRATORS",
    "IntegrationDiverged",
    "PadePolicy",
    "PlanarHopper",
    "PointMass3D",
    "RobotState",
    "Simulation",
    "SingularDenominatorError",
    "SingularMassError",
    "StabilityNonMonotone",
    "compute_integrals",
    "expm_multiply",
    "make_model",
    "pade_expm",
    "step",
]
