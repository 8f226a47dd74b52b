"""Exception hierarchy for hetero-dispatch.

Errors fall into three groups:

1. Configuration: the inputs themselves are invalid (``ConfigError``).
2. Infeasibility: the inputs are valid but describe an unstable system, so no
   stationary quantity exists (``InfeasibleParameters`` and subclasses).
3. Numerical limits of the exact oracle (``TruncationTooSmall``,
   ``StateSpaceTooLarge``).
"""


class DispatchAnalysisError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(DispatchAnalysisError, ValueError):
    """Invalid system or policy parameters."""


class InfeasibleParameters(DispatchAnalysisError):
    """Parameters admit no stable stationary solution."""


class NoStableFixedPoint(InfeasibleParameters):
    """Fixed-point iteration left the unit box, failed to converge, or landed
    on a point whose tagged queues are unstable."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class DivergentTail(InfeasibleParameters):
    """The stationary tail recursion produced values inconsistent with a
    decaying queue-length distribution."""


class DivergenceError(InfeasibleParameters):
    """A mean-response-time denominator is not positive."""


class ConditionalUndefined(DispatchAnalysisError):
    """Conditioning event has probability zero (no busy servers in a class)."""


class AllInfeasible(DispatchAnalysisError):
    """Every evaluated policy parameter point was infeasible."""


class TruncationTooSmall(DispatchAnalysisError):
    """Stationary mass at the queue cap exceeds the allowed limit."""

    def __init__(self, message: str, cap_mass: float):
        super().__init__(message)
        self.cap_mass = cap_mass


class StateSpaceTooLarge(DispatchAnalysisError):
    """Requested CTMC would exceed the configured state-space limit."""
