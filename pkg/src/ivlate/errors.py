"""Exception types shared across the package."""


class IvlateError(Exception):
    """Base class for all package errors."""


class MissingColumn(IvlateError):
    pass


class SubvectorViolation(IvlateError):
    pass


class ConstantColumn(IvlateError):
    pass


class DimensionMismatch(IvlateError):
    pass


class NotConverged(IvlateError):
    """Raised when a fit is requested strictly and did not converge."""


class NonFiniteObjective(IvlateError):
    pass


class EmptyArm(IvlateError):
    pass


class EmptyCell(IvlateError):
    pass


class RefitDiverged(IvlateError):
    pass


class FoldConstructionFailed(IvlateError):
    pass


class AllFitsDiverged(IvlateError):
    pass


class ZeroDenominator(IvlateError):
    pass


class PropensityAtBoundary(IvlateError):
    pass


class ZeroVariance(IvlateError):
    pass


class InvalidDims(IvlateError):
    pass


class ParseError(IvlateError):
    pass


class NonBinaryTreatment(IvlateError):
    pass


class NonBinaryInstrument(IvlateError):
    pass


class DuplicateColumn(IvlateError):
    pass


class DegenerateKnot(UserWarning):
    """Warning category for hinge terms that collapse to a zero column."""
