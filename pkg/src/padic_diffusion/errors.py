"""Exception hierarchy shared by every module."""


class PadicError(Exception):
    """Base class for all package errors."""


class ValidationError(PadicError, ValueError):
    """A precondition on inputs or configuration was violated."""


class InsufficientPrecision(PadicError):
    """Digit truncation is too coarse to determine the requested quantity."""


class NumericalFailure(PadicError):
    """A numerical procedure could not reach its tolerance."""


class SeriesToleranceError(NumericalFailure):
    """A truncated series could not certify its tail below the tolerance.

    ``achieved`` holds the best tail bound reached within the term budget.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class MethodDisagreement(NumericalFailure):
    """Two independent computations of the same object disagree."""


class BudgetExceeded(ValidationError):
    """The requested grid is larger than the configured state budget."""
