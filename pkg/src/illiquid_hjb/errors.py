"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class HJBError(Exception):
    """Base class for all package errors."""


class DomainError(HJBError, ValueError):
    """An argument lies outside the domain of a formula (e.g. ``c <= 0``)."""


class ParameterError(HJBError, ValueError):
    """Model or case parameters violate a stated constraint."""


class SingularJetError(HJBError, ZeroDivisionError):
    """A jet makes a denominator of the PDE vanish."""


class NonConcaveJetError(HJBError, ValueError):
    """Policy requested at a jet with non-negative second derivative in l."""


class UnsupportedExtensionError(HJBError):
    """A generator was requested for a survival law that does not admit it."""


class DegenerateSubstitutionError(HJBError, ValueError):
    """The Jacobian of an invariant substitution is singular."""


class ClosureFailure(HJBError):
    """A bracket is not expressible in the catalog basis."""


class NonConvergenceError(HJBError, RuntimeError):
    """An iterative solver failed; the last iterate is attached."""

    def __init__(self, message: str, last_iterate=None, history=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.history = history


class ExtrapolationError(HJBError, ValueError):
    """A point maps outside the solved domain."""


class ConfigError(HJBError, ValueError):
    """The run configuration does not match the schema."""
