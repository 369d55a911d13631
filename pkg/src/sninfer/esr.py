"""Two-step expected shortfall regression.

Step one fits a quantile regression; step two runs least squares on the
observations in the chosen tail of the fitted quantile.  ``side="upper"``
gives the upper-tail shortfall (the right-tail "expected longrise" of the
Growth-at-Risk literature); ``side="lower"`` gives the left-tail shortfall
used for GDP downside risk.

The upper tail keeps observations strictly above the fitted quantile and
the lower tail those at or below it, so the two tails partition the sample.
Residuals within a 1e-7 relative band of zero count as zero.  A tail fit
needs ``k`` observations; with exactly ``k`` it interpolates them.  A basic
quantile fit interpolates ``k`` points itself, so demanding ``k + 1`` would
make the early windows of an expanding path at ``tau = 0.9`` infeasible in
almost every sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _qrsolve
from .data import TimeSeriesDataset, check_epsilon, check_tau, trim_start
from .exceptions import EstimationError, ExceedanceShortfallError, RankDeficientError
from .qr import RANK_RTOL, EstimatePath, expanding_qr_path, fit_qr

SIDES = ("upper", "lower")


def check_side(side: str) -> str:
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}, got {side!r}")
    return side


def default_epsilon(target: str, n: int | None = None, tau: float | None = None) -> float:
    """Trimming fraction used unless the caller overrides it.

    0.1 for quantile regressions, 0.25 for expected shortfall, and 0.3 for
    expected shortfall with ``n <= 100`` at ``tau >= 0.9``, where 25 percent
    of the sample leaves too few tail observations.
    """
    if target == "quantile":
        return 0.1
    if n is not None and tau is not None and n <= 100 and max(tau, 1 - tau) >= 0.9:
        return 0.3
    return 0.25


MIN_TAIL_EXTRA = 0  # tail size needed beyond k


def tail_mask(residuals, side: str, scale: float) -> np.ndarray:
    band = 1e-7 * (1.0 + scale)
    if side == "upper":
        return residuals > band
    return residuals <= band


def psi_star(qr_residuals, es_residuals, side: str = "upper", scale: float = 0.0):
    """Expected shortfall generalized errors ``1{tail} * xi``.

    ``qr_residuals`` are ``Y - X'alpha``, ``es_residuals`` are ``Y - X'beta``.
    The tail uses the same zero band as the estimator, so at a full-sample
    fit with an intercept the errors average to zero up to rounding.
    """
    qr_residuals = np.asarray(qr_residuals, dtype=float)
    es_residuals = np.asarray(es_residuals, dtype=float)
    return tail_mask(qr_residuals, check_side(side), scale) * es_residuals


@dataclass(frozen=True)
class EsFit:
    beta_hat: np.ndarray
    alpha_hat: np.ndarray
    tau: float
    side: str
    n_exceed: int
    m: int


def fit_es(data: TimeSeriesDataset, tau: float, alpha_hat=None, side: str = "upper",
           window: int | None = None) -> EsFit:
    """Least squares of ``y`` on ``x`` over the tail subsample of ``1..window``.

    ``alpha_hat`` defaults to the quantile fit on the same window.
    """
    tau = check_tau(tau)
    check_side(side)
    n, k = data.n, data.k
    window = n if window is None else int(window)
    if not k + 1 <= window <= n:
        raise EstimationError(f"window must lie in [{k + 1}, {n}], got {window}")
    X = data.x[:window]
    y = data.y[:window]
    if alpha_hat is None:
        alpha_hat = fit_qr(data, tau, window).alpha_hat
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    if alpha_hat.shape != (k,):
        raise ValueError(f"alpha_hat must have length {k}")
    mask = tail_mask(y - X @ alpha_hat, side, float(np.max(np.abs(y))))
    count = int(mask.sum())
    if count < k + MIN_TAIL_EXTRA:
        raise ExceedanceShortfallError(
            f"window {window}: {count} tail observations, need at least {k + MIN_TAIL_EXTRA}")
    Xe, ye = X[mask], y[mask]
    sv = np.linalg.svd(Xe, compute_uv=False)
    if sv[-1] <= RANK_RTOL * sv[0]:
        raise RankDeficientError(f"window {window}: tail design is rank deficient")
    beta, *_ = np.linalg.lstsq(Xe, ye, rcond=None)
    return EsFit(beta, alpha_hat, tau, side, count, window)


def expanding_es_path(data: TimeSeriesDataset, tau: float, epsilon: float,
                      side: str = "upper", qr_path: EstimatePath | None = None) -> EstimatePath:
    """Two-step estimates on the windows ``floor(n*epsilon)..n``.

    Window ``j`` uses the window-``j`` quantile fit to select its tail.  The
    last entry equals :func:`fit_es` on the full sample.
    """
    tau = check_tau(tau)
    epsilon = check_epsilon(epsilon)
    check_side(side)
    n, k = data.n, data.k
    if qr_path is None:
        qr_path = expanding_qr_path(data, tau, epsilon)
    j0 = trim_start(n, epsilon)
    if qr_path.j_start != j0 or qr_path.n != n:
        raise ValueError("qr_path does not match the data and epsilon")
    alphas = np.ascontiguousarray(qr_path.coefficients)
    X = np.ascontiguousarray(data.x)
    y = np.ascontiguousarray(data.y)
    coefs = np.empty_like(alphas)
    counts = np.zeros(len(alphas), dtype=np.int64)
    res_scale = np.maximum.accumulate(np.abs(y))
    bad = _qrsolve.es_path_kernel(X, y, alphas[:-1], j0, side == "lower", res_scale,
                                  coefs[:-1], counts[:-1])
    if bad >= 0:
        c = counts[bad - j0]
        if c < k + MIN_TAIL_EXTRA:
            raise ExceedanceShortfallError(
                f"window {bad}: {c} tail observations at tau={tau}, need at least {k + MIN_TAIL_EXTRA}; "
                f"expected shortfall regressions need a larger epsilon than quantile "
                f"regressions (epsilon={epsilon} gives a first window of {j0})")
        raise RankDeficientError(f"window {bad}: tail design is rank deficient")
    last = fit_es(data, tau, alphas[-1], side)
    coefs[-1] = last.beta_hat
    return EstimatePath(j0, coefs, tau, epsilon, n, kind="es", side=side, alphas=alphas)
