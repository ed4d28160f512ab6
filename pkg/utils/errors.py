"""
Exception types raised across the corridor planner.

Each error subclasses the built-in exception a caller would otherwise expect,
so ``except ValueError`` keeps working for input problems and
``except RuntimeError`` for failed computations.
"""
from typing import Optional


class ConfigurationError(ValueError):
    """Invalid configuration value or inconsistent shapes."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class ArgumentError(ValueError):
    """Empty or otherwise unusable argument."""


class GeometryError(ValueError):
    """Degenerate geometric input (e.g. every point at the cone apex)."""


class IntegrationError(RuntimeError):
    """The integrator produced a non-finite state."""


class FeasibilityError(RuntimeError):
    """A control sequence does not drive its state to the target."""


class GenerationError(RuntimeError):
    """Accept-reject generation stalled."""


class TrainingLoopError(RuntimeError):
    """The dynamic training loop cannot continue."""

    def __init__(self, message: str, iteration: Optional[int] = None):
        self.iteration = iteration
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)


class GradientUnavailableError(RuntimeError):
    """Too few corridor points to estimate a gradient component."""

    def __init__(self, dimension: int, state=None):
        self.dimension = dimension
        self.state = state
        where = "" if state is None else f" at state {list(map(float, state))}"
        super().__init__(f"gradient unavailable in dimension {dimension}{where}")


class CorridorStateError(RuntimeError):
    """Operation requires a non-empty corridor."""


class NotFoundError(RuntimeError):
    """Search exhausted without a result."""
