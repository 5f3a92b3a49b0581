"""
Exception hierarchy for the stability lab.

Every failure the lab reports is a LabError. Subclasses that describe bad input also
inherit ValueError (or IndexError for out-of-range indices) so callers can catch them
with the built-in types.
"""

from typing import Any


class LabError(Exception):
    """Base class for every error raised by the lab."""

    exit_code = 3

    def __init__(self, message: str, *, path: str | None = None):
        self.path = path
        self.context: list[str] = []
        super().__init__(f"{path}: {message}" if path else message)

    def add_context(self, context: str) -> None:
        """Prefix the message with where the error surfaced; type and exit code are unchanged."""
        self.context.append(context)
        self.args = (f"{context}: {self.args[0]}", *self.args[1:])


class ValidationError(LabError, ValueError):
    """Input failed validation; carries every violated property."""

    exit_code = 1

    def __init__(self, message: str, violations: list[str] | None = None, **kwargs: Any):
        self.violations = violations or []
        if self.violations:
            message = f"{message}: " + "; ".join(self.violations)
        super().__init__(message, **kwargs)


class ConfigError(LabError, ValueError):
    """Experiment configuration is missing, malformed, or inconsistent."""

    exit_code = 1


class ConnectivityError(ValidationError):
    """Gossip matrix does not mix (lambda too close to 1)."""


class ShapeError(ValidationError):
    """Array dimensions do not match the model or dataset."""


class ShiftError(ValidationError):
    """Shifted gossip matrix would have negative entries."""


class RangeError(LabError, IndexError):
    """Node, sample, or step index outside its valid range."""

    exit_code = 1


class DomainError(LabError, ValueError):
    """A closed form was evaluated outside its domain."""

    exit_code = 1


class UnsupportedError(LabError):
    """Operation is not defined for the requested loss family."""

    exit_code = 1


class ConvergenceError(LabError):
    """An iterative solver exhausted its iteration cap."""


class DomainExitError(LabError):
    """An unprojected run left the ball on which the loss constants are certified."""


class NumericsError(LabError):
    """Non-finite values or a violated numerical identity."""


class InsufficientTraceError(LabError):
    """Trajectory was recorded with a stride too coarse for the analysis."""


class IngestError(LabError):
    """Dataset file could not be parsed."""

    exit_code = 1

    def __init__(self, message: str, line: int | None = None, **kwargs: Any):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, **kwargs)


class CriterionFailure(LabError):
    """One or more acceptance criteria failed."""

    exit_code = 2

    def __init__(self, failed: list[str]):
        self.failed = failed
        super().__init__("failed criteria: " + ", ".join(failed))


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code."""
    if isinstance(exc, LabError):
        return exc.exit_code
    if isinstance(exc, ValueError):
        return 1
    return 3
