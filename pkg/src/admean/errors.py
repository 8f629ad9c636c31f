"""Exception types raised by the estimator library."""


class AdmeanError(Exception):
    """Base class for all library errors."""


class NonSymmetric(AdmeanError, ValueError):
    pass


class NotPsd(AdmeanError, ValueError):
    pass


class DimMismatch(AdmeanError, ValueError):
    pass


class NotDowndatable(AdmeanError, ValueError):
    pass


class BadScale(AdmeanError, ValueError):
    pass


class BadBlockSize(AdmeanError, ValueError):
    pass


class OddSampleSize(AdmeanError, ValueError):
    pass


class NoiseLenMismatch(AdmeanError, ValueError):
    pass


class IndexOutOfRange(AdmeanError, IndexError):
    pass


class EmptySurvivorSet(AdmeanError, RuntimeError):
    pass


class InsufficientSample(AdmeanError, ValueError):
    """The sample size is too small for the requested parameter schedule."""

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = list(records or [])


class BadSpec(AdmeanError, ValueError):
    pass


class BadC1(AdmeanError, ValueError):
    pass


class PreconditionUnsatisfied(AdmeanError, ValueError):
    pass


class DimNotOne(AdmeanError, ValueError):
    pass
