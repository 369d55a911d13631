"""Sandwich-variance t-tests for quantile regression coefficients.

The meat ``J`` is either the i.i.d. second moment of ``psi(e_t) x_t`` or a
Bartlett-weighted long-run covariance.  Two breads are available: the
homoskedastic sparsity estimate ``(X'X/n) / s_hat`` used by quantreg's
``iid`` standard errors (the default), and Powell's Gaussian-kernel estimate.
Both use a Hall-Sheather bandwidth.  The kernel bread is badly biased on the
simulation design, whose conditional scale ``2 + 0.5 x_t`` can reach zero, so
the tests default to the sparsity bread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import TimeSeriesDataset, check_tau
from .exceptions import EstimationError
from .qr import fit_qr, psi

MODES = ("iid", "hac")


def hall_sheather(n: int, tau: float, alpha: float = 0.05) -> float:
    """Hall-Sheather bandwidth on the probability scale, kept inside (0, min(tau, 1 - tau))."""
    tau = check_tau(tau)
    x0 = stats.norm.ppf(tau)
    f0 = stats.norm.pdf(x0)
    h = n ** (-1 / 3) * stats.norm.ppf(1 - alpha / 2) ** (2 / 3) \
        * (1.5 * f0 ** 2 / (2 * x0 ** 2 + 1)) ** (1 / 3)
    return float(min(h, 0.999 * min(tau, 1 - tau)))


def residual_bandwidth(residuals, tau: float) -> float:
    """Convert the Hall-Sheather bandwidth to the residual scale.

    Uses the Gaussian quantile spread ``Phi^{-1}(tau + h) - Phi^{-1}(tau - h)``
    times a robust residual scale ``min(sd, IQR / 1.34)``.
    """
    r = np.asarray(residuals, dtype=float)
    h = hall_sheather(len(r), tau)
    q75, q25 = np.quantile(r, [0.75, 0.25])
    scale = min(np.std(r, ddof=1), (q75 - q25) / 1.34)
    if not scale > 0:
        scale = np.std(r, ddof=1)
    if not scale > 0:
        raise EstimationError("residuals have zero spread; sparsity bandwidth undefined")
    return float((stats.norm.ppf(tau + h) - stats.norm.ppf(tau - h)) * scale)


def hac_lag(n: int) -> int:
    """Bartlett truncation lag ``floor(1.3 n^{1/3})``."""
    return int(math.floor(1.3 * n ** (1 / 3) + 1e-12))


def estimate_bread(data: TimeSeriesDataset, tau: float, alpha_hat, bandwidth: float | None = None):
    """Powell kernel estimate ``(n h)^{-1} sum K(e_t / h) x_t x_t'``."""
    X, r = data.x, data.y - data.x @ np.asarray(alpha_hat, dtype=float)
    if bandwidth is None:
        bandwidth = residual_bandwidth(r, tau)
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    w = stats.norm.pdf(r / bandwidth) / bandwidth
    D = (X * w[:, None]).T @ X / len(r)
    return (D + D.T) / 2


def estimate_sparsity(residuals, tau: float, k: int) -> float:
    """Sparsity ``1/f(F^{-1}(tau))`` from residual order statistics.

    Takes the ``ceil(n h)`` residuals closest to zero (skipping exact zeros
    from the basic fit), sorts them, and median-regresses them on their ranks
    ``i / (n - k)``; the slope estimates the sparsity.
    """
    from .data import TimeSeriesDataset

    r = np.asarray(residuals, dtype=float)
    n = len(r)
    pz = int(np.sum(np.abs(r) < np.finfo(float).eps ** 0.5))
    h = max(k + 1, math.ceil(n * hall_sheather(n, tau)))
    ir = np.arange(pz + 1, min(h + pz + 1, n) + 1)
    if len(ir) < 3:
        raise EstimationError("too few residuals to estimate the sparsity")
    ordered = np.sort(r[np.argsort(np.abs(r), kind="stable")][ir - 1])
    design = np.column_stack([np.ones(len(ir)), ir / (n - k)])
    s = fit_qr(TimeSeriesDataset(ordered, design), 0.5).alpha_hat[1]
    if not s > 0:
        raise EstimationError(f"non-positive sparsity estimate {s:.3g}")
    return float(s)


def estimate_meat(data: TimeSeriesDataset, tau: float, alpha_hat, mode: str = "iid",
                  lag_truncation: int | None = None):
    """Second moment (``iid``) or Bartlett long-run covariance (``hac``) of ``psi(e_t) x_t``.

    The HAC version does not demean the scores, so lag 0 reproduces ``iid``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    X = data.x
    u = X * psi(data.y - X @ np.asarray(alpha_hat, dtype=float), tau)[:, None]
    n = len(u)
    J = u.T @ u / n
    if mode == "hac":
        L = hac_lag(n) if lag_truncation is None else int(lag_truncation)
        if L < 0:
            raise ValueError("lag_truncation must be nonnegative")
        for h in range(1, min(L, n - 1) + 1):
            G = u[h:].T @ u[:-h] / n
            J += (1 - h / (L + 1)) * (G + G.T)
    return (J + J.T) / 2


@dataclass(frozen=True)
class QrVarianceEstimate:
    d_hat: np.ndarray
    j_hat: np.ndarray
    sandwich: np.ndarray
    bandwidth_d: float
    bandwidth_j: int


BREADS = ("sparsity", "kernel")


def estimate_variance(data: TimeSeriesDataset, tau: float, alpha_hat, mode: str = "iid",
                      bread: str = "sparsity", bandwidth: float | None = None,
                      lag_truncation: int | None = None) -> QrVarianceEstimate:
    """Asymptotic covariance ``D^{-1} J D^{-1}`` of ``sqrt(n)(alpha_hat - alpha)``.

    ``bandwidth_d`` is the Hall-Sheather fraction for the sparsity bread and
    the residual-scale kernel bandwidth for the kernel bread.
    """
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    r = data.y - data.x @ alpha_hat
    if bread == "sparsity":
        h = hall_sheather(data.n, tau)
        D = data.x.T @ data.x / data.n / estimate_sparsity(r, tau, data.k)
    elif bread == "kernel":
        h = residual_bandwidth(r, tau) if bandwidth is None else float(bandwidth)
        D = estimate_bread(data, tau, alpha_hat, h)
    else:
        raise ValueError(f"bread must be one of {BREADS}, got {bread!r}")
    L = 0 if mode == "iid" else (hac_lag(data.n) if lag_truncation is None else int(lag_truncation))
    J = estimate_meat(data, tau, alpha_hat, mode, L)
    try:
        Dinv = np.linalg.inv(D)
    except np.linalg.LinAlgError:
        raise EstimationError("bread estimate is singular") from None
    V = Dinv @ J @ Dinv
    return QrVarianceEstimate(D, J, (V + V.T) / 2, h, L)


@dataclass(frozen=True)
class BaselineTestResult:
    statistic: float
    p_value: float
    reject: bool
    std_error: float
    estimate: float


def baseline_t_test(data: TimeSeriesDataset, tau: float, coefficient_index: int,
                    null_value: float, mode: str = "iid", nu: float = 0.05,
                    alpha_hat=None, bread: str = "sparsity",
                    lag_truncation: int | None = None) -> BaselineTestResult:
    """Two-sided t-test of one coefficient against standard normal quantiles."""
    if alpha_hat is None:
        alpha_hat = fit_qr(data, tau).alpha_hat
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    var = estimate_variance(data, tau, alpha_hat, mode, bread, lag_truncation=lag_truncation)
    v = var.sandwich[coefficient_index, coefficient_index]
    if not v > 0:
        raise EstimationError(f"non-positive variance estimate {v:.3g}")
    se = math.sqrt(v / data.n)
    t = (alpha_hat[coefficient_index] - null_value) / se
    p = float(2 * stats.norm.sf(abs(t)))
    return BaselineTestResult(float(t), p, bool(abs(t) > stats.norm.ppf(1 - nu / 2)), se,
                              float(alpha_hat[coefficient_index]))
