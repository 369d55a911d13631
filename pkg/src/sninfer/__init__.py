"""Self-normalized inference for time-series quantile and expected shortfall regressions."""

from .data import TimeSeriesDataset, load_config, load_csv, write_csv
from .exceptions import (
    ConvergenceError,
    DataError,
    DegenerateStatisticError,
    EstimationError,
    ExceedanceShortfallError,
    ExperimentAborted,
    RankDeficientError,
    SnInferError,
)
from .qr import EstimatePath, QrFit, expanding_qr_path, fit_qr, psi, tick_loss
from .esr import EsFit, expanding_es_path, fit_es, psi_star

__version__ = "0.1.0"
