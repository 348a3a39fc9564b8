"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ``DataError`` subclasses exit with 3,
``NumericalError`` subclasses with 4.
"""


class EEPError(Exception):
    """Base class for every error raised by the package."""


class DataError(EEPError, ValueError):
    """Input data cannot support the requested computation."""


class NumericalError(EEPError, ArithmeticError):
    """A numerical routine failed to produce a usable answer."""


class InsufficientData(DataError):
    pass


class ZeroVariance(DataError):
    pass


class InsufficientExceedances(DataError):
    pass


class EmptyWorld(DataError):
    pass


class AllThresholdsRejected(DataError):
    pass


class ZeroVector(DataError):
    pass


class OutOfRange(DataError):
    pass


class HorizonExceedsOrder(DataError):
    pass


class AnchorViolation(DataError):
    pass


class ConvergenceFailure(NumericalError):
    pass


class NonFiniteDensity(NumericalError):
    pass
