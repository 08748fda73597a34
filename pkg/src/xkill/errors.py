"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class XKillError(Exception):
    """Base class for all toolkit errors."""


class ParseError(XKillError):
    """Syntax error in SQL input, with a source position when known."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(message)
        self.line = line
        self.column = column

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        base = super().__str__()
        if self.line:
            return f"{base} (line {self.line}, column {self.column})"
        return base


class UnsupportedFeature(XKillError):
    """Query uses a construct outside the supported class."""

    def __init__(self, kind: str, detail: str = ""):
        super().__init__(f"unsupported feature: {kind}" + (f" ({detail})" if detail else ""))
        self.kind = kind


class UnsupportedConstraint(XKillError):
    """DDL uses a constraint we do not model (CHECK, triggers, ...)."""

    def __init__(self, construct: str):
        super().__init__(f"unsupported constraint: {construct}")
        self.construct = construct


class DanglingForeignKey(XKillError):
    """FK references a relation/attribute set that is not a declared key."""


class TypeMismatch(XKillError):
    """Sample data cell does not fit the declared attribute type."""


class CardinalityOverflow(XKillError):
    """A relation instance would exceed MAX_TUPLES."""


class Unsatisfiable(XKillError):
    """Constraint set has no solution (used by the string solver)."""


class InfeasibleNull(XKillError):
    """IS NULL requested on an attribute that can never be NULL."""


class EquivalentMutation(XKillError):
    """The requested mutation is provably equivalent; no dataset exists."""


class ClauseExplosion(XKillError):
    """DNF expansion exceeded the configured clause cap."""


class SolverCrash(XKillError):
    """The solver child process died or produced garbage."""


class SolverTimeout(XKillError):
    """The solver child process exceeded its time budget."""


class DomainViolation(XKillError):
    """Decoded model violates schema domains; indicates an internal bug."""


class ExecError(XKillError):
    """Query execution failed on a dataset."""
