"""Exception hierarchy for timed-abstraction.

Every error raised on purpose by the package derives from ``TimedAbstractionError``
and from the built-in exception a caller would naturally catch (``ValueError`` for
bad input, ``RuntimeError`` for numerical breakdowns).
"""

__all__ = [
    "TimedAbstractionError",
    "ExpressionSyntaxError",
    "ExpressionDomainError",
    "IntegrationError",
    "PartitionError",
    "AutomatonError",
    "ModelFileError",
]

from typing import Any


class TimedAbstractionError(Exception):
    """Base class for all package errors."""


class ExpressionSyntaxError(TimedAbstractionError, ValueError):
    """Source text does not conform to the expression grammar."""

    def __init__(self, message: str, position: int | None = None, source: str | None = None):
        self.position = position
        self.source = source
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class ExpressionDomainError(TimedAbstractionError, ValueError):
    """An expression was evaluated outside the domain of one of its operations."""

    def __init__(self, message: str, subexpression: Any = None):
        self.subexpression = subexpression
        if subexpression is not None:
            message = f"{message} in '{subexpression}'"
        super().__init__(message)


class IntegrationError(TimedAbstractionError, RuntimeError):
    """Numerical integration produced a non-finite state."""

    def __init__(self, message: str, time: float | None = None):
        self.time = time
        super().__init__(message)


class PartitionError(TimedAbstractionError, ValueError):
    """Partition functions or their levels cannot form a partition of the domain."""


class AutomatonError(TimedAbstractionError, ValueError):
    """A timed automaton, clock constraint or automaton state is malformed."""

    def __init__(self, message: str, pointer: str | None = None):
        self.pointer = pointer
        if pointer is not None:
            message = f"{message} (at {pointer})"
        super().__init__(message)


class ModelFileError(TimedAbstractionError, ValueError):
    """A model file is syntactically or semantically invalid."""

    def __init__(self, message: str, block: str | None = None, line: int | None = None, column: int | None = None):
        self.block = block
        self.line = line
        self.column = column
        location = []
        if block:
            location.append(f"block '{block}'")
        if line is not None:
            location.append(f"line {line}, column {column}")
        if location:
            message = f"{message} [{'; '.join(location)}]"
        super().__init__(message)
