"""Exception hierarchy.

Every error carries a ``category`` string that the command-line front end
prints and maps to an exit code.
"""


class LatticeShiftError(Exception):
    category = "numeric"


class DomainError(LatticeShiftError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""

    category = "domain"


class ConfigError(LatticeShiftError, ValueError):
    category = "config"


class CapacityError(LatticeShiftError, RuntimeError):
    """The requested problem exceeds a documented resource guard."""

    category = "capacity"


class BracketError(LatticeShiftError, RuntimeError):
    """A root or stationary point could not be bracketed."""

    category = "numeric"


class NoCrossingError(BracketError):
    """The bracket shows no sign change; no root is reported."""


class DegenerateFringeError(LatticeShiftError, RuntimeError):
    category = "numeric"


class IntegratorError(LatticeShiftError, RuntimeError):
    category = "numeric"
