"""Exception hierarchy shared by every module."""


class CvxOrderError(Exception):
    """Base class for all package errors."""


class InvalidInput(CvxOrderError, ValueError):
    """Malformed user input (bad shapes, bad parameter ranges)."""


class DimensionMismatch(InvalidInput):
    pass


class NegativeWeight(InvalidInput):
    pass


class ZeroMass(InvalidInput):
    pass


class EmptyInput(InvalidInput):
    pass


class NonPSDCovariance(InvalidInput):
    pass


class InvalidSigma(InvalidInput):
    pass


class ShapeMismatch(InvalidInput):
    pass


class InvalidAlpha(InvalidInput):
    pass


class InvalidRegime(InvalidInput):
    pass


class GridTooCoarse(InvalidInput):
    pass


class SolverFailure(CvxOrderError, RuntimeError):
    """A numerical solver did not produce a usable answer."""


class MaxIterExceeded(SolverFailure):
    pass


class NumericalUnderflow(SolverFailure):
    pass


class NonFinite(SolverFailure):
    pass
