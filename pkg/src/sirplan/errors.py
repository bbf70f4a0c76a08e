"""Exception types shared across the package."""

from __future__ import annotations


class SirPlanError(Exception):
    """Base class for every error raised by sirplan."""


class InvalidParams(SirPlanError, ValueError):
    """Epidemic parameters violate their invariants."""


class NearSingularRates(SirPlanError, ValueError):
    """Infection and removal rates are too close for the closed form (b == c)."""


class DegenerateState(SirPlanError, ValueError):
    """No susceptibles left while infected remain; the closed form is undefined."""


class InvalidInstance(SirPlanError, ValueError):
    """A planning instance is malformed or does not match the requested solver."""


class InvalidPlan(SirPlanError, ValueError):
    """A plan is inconsistent with its instance (lengths, durations, trajectory)."""


class OracleTooLarge(SirPlanError, ValueError):
    """Exhaustive enumeration was requested for a horizon above the allowed cap."""


class ParseError(SirPlanError, ValueError):
    """Malformed instance, plan or schedule input.

    ``line`` and ``column`` are 1-based; either may be ``None`` when the error
    is not tied to a source position.
    """

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
