"""Dynamic Quantile test for serial dependence in quantile-regression hits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import TimeSeriesDataset, check_tau
from .exceptions import DegenerateStatisticError
from .qr import psi

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class HitSequence:
    hits: np.ndarray
    tau: float

    def __post_init__(self):
        tau = check_tau(self.tau)
        h = np.asarray(self.hits, dtype=float).reshape(-1)
        ok = np.isclose(h, tau) | np.isclose(h, tau - 1)
        if not np.all(ok):
            raise ValueError("hits must take the values tau or tau - 1")
        h.setflags(write=False)
        object.__setattr__(self, "hits", h)
        object.__setattr__(self, "tau", tau)


@dataclass(frozen=True)
class DqResult:
    statistic: float
    p_value: float
    df: int
    lags: int


def compute_hits(data: TimeSeriesDataset, tau: float, alpha_hat) -> HitSequence:
    return HitSequence(psi(data.y - data.x @ np.asarray(alpha_hat, dtype=float), tau), tau)


def dq_test(hits: HitSequence, lags: int = 10) -> DqResult:
    """Regress hits on an intercept and ``lags`` own lags.

    ``DQ = H'Z(Z'Z)^{-1}Z'H / (tau(1 - tau))`` is compared with a chi-square
    law with ``lags + 1`` degrees of freedom.
    """
    lags = int(lags)
    if lags < 1:
        raise ValueError("lags must be positive")
    h = hits.hits
    n = len(h)
    if n <= lags + 1:
        raise ValueError(f"need more than {lags + 1} hits, got {n}")
    H = h[lags:]
    Z = np.column_stack([np.ones(n - lags)] + [h[lags - i:n - i] for i in range(1, lags + 1)])
    sv = np.linalg.svd(Z, compute_uv=False)
    if sv[-1] <= RANK_RTOL * sv[0]:
        raise DegenerateStatisticError("lagged-hit regressors are rank deficient (constant hits?)")
    coef, *_ = np.linalg.lstsq(Z, H, rcond=None)
    fitted = Z @ coef
    stat = max(float(H @ fitted) / (hits.tau * (1 - hits.tau)), 0.0)
    df = lags + 1
    return DqResult(stat, float(stats.chi2.sf(stat, df)), df, lags)
