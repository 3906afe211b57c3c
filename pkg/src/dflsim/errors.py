"""Exception types shared across the package.

The CLI maps these onto its exit-code contract; see `dflsim.cli`.
"""

from __future__ import annotations


class ConfigurationError(ValueError):
    """Invalid configuration value, domain violation, or construction failure."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = list(violations) if violations else [message]


class ShapeError(ValueError):
    """Dimension mismatch between vectors, matrices, or model inputs."""


class StalenessViolationError(RuntimeError):
    """A consumed parameter version is older than the client's delay bound."""


class ColdStartError(RuntimeError):
    """A neighbor version was requested before any version was received."""


class NonFiniteError(ArithmeticError):
    """A non-finite value appeared in the iteration state or trace."""
