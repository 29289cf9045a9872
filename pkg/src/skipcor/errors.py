"""Exception types raised by skipcor."""


class SkipcorError(ValueError):
    """Base class for recoverable numerical and input errors."""


class ZeroSpreadError(SkipcorError):
    """A projection produced zero interquartile range (or MAD)."""

    def __init__(self, anchor: int):
        super().__init__(f"zero spread in projection (anchor row {anchor})")
        self.anchor = anchor


class DegenerateSampleError(SkipcorError):
    """Too few rows survive outlier removal, or a retained column is constant."""


class BoundaryCorrelationError(SkipcorError):
    """A correlation of exactly +1 or -1 has no finite T statistic."""


class BootstrapDegeneracyError(SkipcorError):
    """A bootstrap resample stayed degenerate after all allowed retries."""


class CalibrationError(SkipcorError):
    """A calibration table is missing, corrupted, or does not fit the data."""
