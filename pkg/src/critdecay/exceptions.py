"""Exception hierarchy shared by all modules."""


class CritDecayError(Exception):
    """Base class for all errors raised by :mod:`critdecay`."""


class PreconditionError(CritDecayError, ValueError):
    """An operation was called with inputs violating its documented preconditions."""


class ResolutionError(CritDecayError):
    """A discretization cannot resolve the requested oscillation scale."""


class AssumptionViolation(CritDecayError):
    """A spectral assumption (e.g. positivity of a sphere operator) fails."""


class ConvergenceError(CritDecayError):
    """An iterative or refinement-based computation did not converge."""


class PoleProximityError(CritDecayError):
    """A Gamma-function argument lies too close to a pole."""


class ConfigError(CritDecayError):
    """Invalid or unparseable run configuration."""
