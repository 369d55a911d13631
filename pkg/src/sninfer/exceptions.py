class SnInferError(Exception):
    """Base class for errors raised by sninfer."""


class DataError(SnInferError, ValueError):
    """Malformed or insufficient input data."""


class EstimationError(SnInferError):
    """An estimator could not be computed on the given window."""


class RankDeficientError(EstimationError):
    pass


class ConvergenceError(EstimationError):
    pass


class ExceedanceShortfallError(EstimationError):
    """Too few tail observations for the least-squares expected shortfall step."""


class DegenerateStatisticError(SnInferError):
    """A self-normalizer or test regressor matrix is (near) singular."""


class ExperimentAborted(SnInferError):
    """Too many replications failed in a Monte Carlo experiment."""

    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table
