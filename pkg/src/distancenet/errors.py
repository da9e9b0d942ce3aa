"""Exception hierarchy shared by every module in the package."""


class DistanceNetError(ValueError):
    """Base class for all validation failures raised by this package."""


class EmptyBatch(DistanceNetError):
    pass


class DimensionMismatch(DistanceNetError):
    pass


class InsufficientSamples(DistanceNetError):
    pass


class SingularMatrix(DistanceNetError):
    pass


class DegenerateSpread(DistanceNetError):
    """Raised when a statistic needs nonzero variance and gets none."""


class DegenerateMean(DistanceNetError):
    """Raised when a cosine distance is requested for a zero mean vector."""


class UnknownArm(DistanceNetError, KeyError):
    pass


class ParseError(DistanceNetError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
