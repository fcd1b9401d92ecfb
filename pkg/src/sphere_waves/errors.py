"""Exception and warning types."""


class SphereWavesError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(SphereWavesError, ValueError):
    """A precondition on an argument does not hold."""


class DegenerateStateError(SphereWavesError, ValueError):
    """A state cannot be normalized (zero position field)."""


class ConfigError(SphereWavesError, ValueError):
    """A configuration file or override could not be parsed or validated."""


class BlowUpError(SphereWavesError, RuntimeError):
    """The integrator produced a non-finite or overflowing state."""

    def __init__(self, step: int, time: float, detail: str = "") -> None:
        self.step = step
        self.time = time
        self.detail = detail
        message = f"numerical blow-up at step {step} (t={time:.6g})"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)

    def __reduce__(self) -> tuple[type["BlowUpError"], tuple[int, float, str]]:
        # raised inside worker processes
        return (type(self), (self.step, self.time, self.detail))


class InvariantError(SphereWavesError, RuntimeError):
    """A verification check failed."""


class StabilityWarning(UserWarning):
    """The step size exceeds the explicit-nonlinearity guard dt <= mu/(2 gamma)."""


class TraceClassWarning(UserWarning):
    """The truncated noise covariance does not look summable."""


class ExclusionBudgetError(InvariantError):
    """Too many replicas of a sweep were excluded after blowing up."""
