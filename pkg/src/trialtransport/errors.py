"""Exception and warning classes.

Errors are grouped so that callers (and the CLI exit-code mapping) can
distinguish bad configuration, bad data, and numerical failure.
"""


class TransportError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(TransportError):
    pass


class DataError(TransportError):
    pass


class NumericalError(TransportError):
    pass


class DimensionMismatch(DataError):
    pass


class SchemaViolation(DataError):
    pass


class EmptyAfterFiltering(DataError):
    pass


class UnknownColumn(DataError):
    pass


class MissingValue(DataError):
    pass


class NoTargetUnits(DataError):
    pass


class OneClassOnly(DataError):
    pass


class TooFewDistinctValues(DataError):
    pass


class ZeroVariance(DataError):
    pass


class DegenerateCohort(DataError):
    pass


class RankDeficient(NumericalError):
    pass


class NotConverged(NumericalError):
    def __init__(self, message, fit=None):
        super().__init__(message)
        self.fit = fit


class NonpositiveProbability(NumericalError):
    pass


class ZeroWeightSum(NumericalError):
    pass


class TooManyFailures(NumericalError):
    pass


class SeparationWarning(UserWarning):
    """Fitted probabilities numerically at 0 or 1 at convergence."""


class PositivityWarning(UserWarning):
    """Some non-participants have an estimated participation probability near zero."""
