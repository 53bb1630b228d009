"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the domain of a mathematical operation."""


class UnboundedConjugateError(ArithmeticError):
    """Conjugate maximization failed to bracket a finite supremum."""


class NumericError(ArithmeticError):
    """An inner iterative solve did not converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ShapeError(ValueError):
    """Arrays or fields defined on incompatible geometries."""


class UsageError(ValueError):
    """An operation was requested in a context where it is not defined."""


class SolverError(RuntimeError):
    """A linear solve could not be performed."""


class FlowIntegrityError(RuntimeError):
    """A characteristic left the computational domain."""


class StiffnessError(RuntimeError):
    """Requested step size underflowed."""


class StepError(NumericError):
    """A time step failed to converge."""


class ResolutionError(ValueError):
    """Requested approximation level exceeds the available resolution."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class PathParseError(ValueError):
    """Malformed driving-path table."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
