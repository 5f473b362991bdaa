"""Exception types shared across the library."""


class CompactGPError(Exception):
    """Base class for all library errors."""


class OrderOutOfRange(CompactGPError):
    pass


class QuadratureNonConvergence(CompactGPError):
    pass


class EigenFailure(CompactGPError):
    pass


class MaxIterationsExceeded(CompactGPError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InfeasibleConstraint(CompactGPError):
    pass


class UnsortedInput(CompactGPError):
    pass


class DuplicatePoints(CompactGPError):
    pass


class PatternTooSmall(CompactGPError):
    pass


class DimensionMismatch(CompactGPError):
    pass


class BreakdownDetected(CompactGPError):
    pass


class NotPositiveDefinite(CompactGPError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class AllCutoffsFailed(CompactGPError):
    pass
