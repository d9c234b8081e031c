"""Exception hierarchy shared by every module of the package."""


class AuditError(Exception):
    """Base class for all errors raised by :mod:`adiabatic_audit`."""


class ParameterError(AuditError, ValueError):
    """An argument is outside its admissible range."""


class FormatError(AuditError, ValueError):
    """An input file does not follow the documented layout."""


class DegeneracyError(AuditError):
    """Two instantaneous levels come closer than the degeneracy tolerance."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ResolutionError(AuditError):
    """The time grid is too coarse for the requested operation."""


class AccuracyError(AuditError):
    """An integrator exceeded its norm or unitarity budget."""


class NumericalConsistencyError(AuditError):
    """Two independent estimates of the same quantity disagree."""


class PreconditionError(AuditError):
    """The input does not satisfy the premise of the operation."""


class ConditioningError(AuditError):
    """A linear-algebra step is too ill conditioned to give a finite result."""
