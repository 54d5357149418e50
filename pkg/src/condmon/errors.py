"""Exception hierarchy shared by all condmon modules.

Three broad classes matter to callers (and map onto service error codes /
CLI exit codes): bad input data, bad configuration, and contract misuse by
calling code. Everything else is an internal error.
"""

from __future__ import annotations


class CondmonError(Exception):
    """Base class for all errors raised by condmon."""

    code = "internal-error"


class InvalidInputError(CondmonError):
    """Input data is malformed or outside the documented domain."""

    code = "invalid-input"


class ContractViolationError(CondmonError):
    """Caller broke an API precondition (wrong shape, wrong dimension)."""

    code = "contract-violation"


class ConfigError(CondmonError):
    """Configuration file or parameter set is invalid."""

    code = "config-error"


class InsufficientDataError(InvalidInputError):
    """Not enough observations for the requested fit."""


class EmptyTrainingSetError(InvalidInputError):
    """No rows survived cleaning/exclusion; nothing to train on."""


class DegenerateVectorError(InvalidInputError):
    """A vector that must be nonzero was (numerically) zero."""


class SingularCovarianceError(InvalidInputError):
    """Covariance matrix is rank deficient beyond the condition guard."""

    def __init__(self, message: str, suspects: list[str] | None = None):
        super().__init__(message)
        self.suspects = suspects or []


class InvalidBaselineError(InvalidInputError):
    """A monitoring baseline has unusable statistics (e.g. zero distortion)."""
