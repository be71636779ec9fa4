"""Exception types shared across the package."""


class ExposimError(Exception):
    """Base class for all package errors."""


class SingularDenominatorError(ExposimError):
    """The Pade denominator D_j(A) is numerically singular.

    Usually means the polynomial order is too low for the norm of ``A``.
    """


class SingularMassError(ExposimError):
    """Cholesky factorization of the mass matrix failed."""


class IntegrationDiverged(ExposimError):
    """A step produced a non-finite state."""


class DivergedGroundTruth(ExposimError):
    """The reference trajectory of a benchmark scenario blew up."""


class StabilityNonMonotone(ExposimError):
    """A smaller step was unstable although a larger one was stable."""


class ConfigError(ExposimError):
    """Malformed or inconsistent run configuration."""
