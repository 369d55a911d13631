"""Tick-loss quantile regression: single-window fits and expanding-window paths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse

from . import _qrsolve
from .data import TimeSeriesDataset, check_epsilon, check_tau, trim_start
from .exceptions import ConvergenceError, EstimationError, RankDeficientError

GAP_TOL = 1e-9
MAX_ITER = 100
RANK_RTOL = 1e-10
_DESCENT_MAXIT = 50


def tick_loss(u, tau):
    """Check loss ``u * (tau - 1{u <= 0})``; vectorized over ``u``."""
    u = np.asarray(u, dtype=float)
    out = u * (tau - (u <= 0))
    return out if out.ndim else float(out)


def psi(u, tau):
    """Generalized error ``tau - 1{u <= 0}``, the tick-loss subgradient.

    The boundary ``u = 0`` maps to ``tau - 1``.
    """
    u = np.asarray(u, dtype=float)
    out = tau - (u <= 0).astype(float)
    return out if out.ndim else float(out)


def residual_tolerance(y) -> float:
    """Zero band for residuals when checking subgradient optimality."""
    return 1e-7 * (1.0 + float(np.max(np.abs(y), initial=0.0)))


@dataclass(frozen=True)
class QrFit:
    alpha_hat: np.ndarray
    tau: float
    objective: float
    m: int
    basis: tuple | None = None
    iterations: int = 0


@dataclass(frozen=True)
class EstimatePath:
    """Expanding-window estimates for windows ``j_start..n``.

    ``coefficients[j - j_start]`` is the fit on observations ``1..j``.
    ``kind`` is ``"quantile"`` or ``"es"``; ``side`` is only meaningful for
    expected shortfall paths.
    """

    j_start: int
    coefficients: np.ndarray
    tau: float
    epsilon: float
    n: int
    kind: str = "quantile"
    side: str | None = None
    alphas: np.ndarray | None = None

    @property
    def windows(self) -> np.ndarray:
        return np.arange(self.j_start, self.n + 1)

    @property
    def full(self) -> np.ndarray:
        """The full-sample estimate (window ``n``)."""
        return self.coefficients[-1]


def _check_rank(X: np.ndarray, label: str) -> None:
    sv = np.linalg.svd(X, compute_uv=False)
    if sv.size < X.shape[1] or sv[-1] <= RANK_RTOL * sv[0]:
        raise RankDeficientError(f"{label}: design matrix is rank deficient")


def subgradient_ok(X, y, tau, alpha_hat, res_tol=None, opt_tol=1e-8) -> bool:
    """Whether 0 lies in the subdifferential of the tick loss at ``alpha_hat``.

    For each column ``c`` checks
    ``|sum_t psi(r_t) x_tc| <= sum_{|r_t| <= res_tol} |x_tc| + opt_tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    r = y - X @ alpha_hat
    if res_tol is None:
        res_tol = residual_tolerance(y)
    score = np.abs(psi(r, tau) @ X)
    slack = np.abs(X[np.abs(r) <= res_tol]).sum(axis=0)
    return bool(np.all(score <= slack + opt_tol))


def _objective(X, y, beta, tau) -> float:
    return float(np.sum(tick_loss(y - X @ beta, tau)))


def _independent_rows(X: np.ndarray, order: np.ndarray) -> np.ndarray | None:
    """First ``k`` rows in ``order`` that are linearly independent."""
    k = X.shape[1]
    chosen = []
    Q = np.zeros((0, k))
    scale = np.max(np.abs(X)) + 1.0
    for i in order:
        v = X[i] - Q.T @ (Q @ X[i])
        nv = np.linalg.norm(v)
        if nv > 1e-9 * scale:
            chosen.append(i)
            Q = np.vstack([Q, v / nv])
            if len(chosen) == k:
                return np.array(chosen, dtype=np.int64)
    return None


def _crossover(X, y, tau, beta_start):
    m = X.shape[0]
    order = np.argsort(np.abs(y - X @ beta_start), kind="stable")
    basis = _independent_rows(X, order)
    if basis is None:
        return beta_start, None, 2
    is_basic = np.zeros(m, dtype=np.bool_)
    is_basic[basis] = True
    tie_tol = 1e-11 * (1.0 + np.max(np.abs(y)))
    beta, status, _ = _qrsolve.vertex_descent(X, y, m, tau, basis, is_basic, tie_tol, _DESCENT_MAXIT)
    return beta, tuple(int(b) for b in basis), status


def _simplex(X, y, tau):
    """Exact fallback for degenerate problems where the interior point stalls."""
    m, k = X.shape
    c = np.concatenate([np.zeros(k), np.full(m, tau), np.full(m, 1 - tau)])
    A = sparse.hstack([sparse.csr_matrix(X), sparse.eye(m), -sparse.eye(m)], format="csr")
    res = optimize.linprog(c, A_eq=A, b_eq=y, bounds=[(None, None)] * k + [(0, None)] * (2 * m),
                           method="highs")
    if res.status != 0:
        raise ConvergenceError(f"interior point stalled and the simplex fallback failed: {res.message}")
    return res.x[:k]


def _solve_window(X: np.ndarray, y: np.ndarray, tau: float):
    """Cold interior point fit, snapped to the optimal vertex when it is unique.

    Returns ``(beta, basis, iterations)``; ``basis`` is an optimal basis
    usable as a warm start (``None`` when crossover failed).  If the
    interior point stalls short of the gap tolerance (rounding on degenerate
    or badly scaled data), the result must be certified by the crossover,
    retried from an exact simplex solution when needed.
    """
    beta_ip, gap, iters, converged = _qrsolve.frisch_newton(X, y, tau, GAP_TOL, MAX_ITER)
    if not np.all(np.isfinite(beta_ip)):
        converged = False
        beta_ip = np.zeros(X.shape[1])
    beta_v, basis, status = _crossover(X, y, tau, beta_ip)
    if status == 0:
        return beta_v, basis, iters
    if converged:
        return beta_ip, basis if status == 1 else None, iters
    if status == 1:
        return beta_v, basis, iters
    beta_s = _simplex(X, y, tau)
    beta_v, basis, status = _crossover(X, y, tau, beta_s)
    if status in (0, 1):
        return beta_v, basis, iters
    return beta_s, None, iters


def fit_qr(data: TimeSeriesDataset, tau: float, window: int | None = None) -> QrFit:
    """Minimize the tick loss over observations ``1..window`` (default all).

    When the minimizer is unique the exact basic solution is returned;
    otherwise the interior-point solution, which sits inside the optimal
    face, is kept.
    """
    tau = check_tau(tau)
    n, k = data.n, data.k
    window = n if window is None else int(window)
    if not k + 1 <= window <= n:
        raise EstimationError(f"window must lie in [{k + 1}, {n}], got {window}")
    X = np.ascontiguousarray(data.x[:window])
    y = np.ascontiguousarray(data.y[:window])
    _check_rank(X, f"window {window}")
    beta, basis, iters = _solve_window(X, y, tau)
    return QrFit(beta, tau, _objective(X, y, beta, tau), window, basis, iters)


def expanding_qr_path(data: TimeSeriesDataset, tau: float, epsilon: float,
                      warm_start: bool = True) -> EstimatePath:
    """Quantile regression estimates on the windows ``floor(n*epsilon)..n``.

    With ``warm_start`` each window starts exact vertex descent from the
    previous window's optimal basis; windows whose optimum is not unique are
    refit cold so they agree with :func:`fit_qr`.  The final entry is always
    ``fit_qr(data, tau)``.
    """
    tau = check_tau(tau)
    epsilon = check_epsilon(epsilon)
    n, k = data.n, data.k
    j0 = trim_start(n, epsilon)
    if j0 < k + 1:
        raise EstimationError(
            f"floor(n*epsilon)={j0} is below k+1={k + 1}; increase epsilon or the sample")
    X = np.ascontiguousarray(data.x)
    y = np.ascontiguousarray(data.y)
    _check_rank(X[:j0], f"window {j0}")
    coefs = np.empty((n - j0 + 1, k))

    def cold(m):
        try:
            return fit_qr(data, tau, m)
        except EstimationError as exc:
            raise type(exc)(f"window {m}: {exc}") from exc

    if not warm_start:
        for m in range(j0, n + 1):
            coefs[m - j0] = cold(m).alpha_hat
        return EstimatePath(j0, coefs, tau, epsilon, n)

    full = cold(n)
    status = np.zeros(n - j0 + 1, dtype=np.int64)
    yscale = np.maximum.accumulate(np.abs(y))
    first = cold(j0)
    coefs[0] = first.alpha_hat
    status[0] = 0
    basis, m = first.basis, j0 + 1
    while m <= n - 1:
        if basis is None:
            fit = cold(m)
            coefs[m - j0], basis, m = fit.alpha_hat, fit.basis, m + 1
            continue
        b = np.array(basis, dtype=np.int64)
        is_basic = np.zeros(n, dtype=np.bool_)
        is_basic[b] = True
        failed = _qrsolve.qr_path_kernel(X, y, tau, m, n - 1, b, is_basic, yscale,
                                         _DESCENT_MAXIT, coefs[m - j0:], status[m - j0:])
        if failed < 0:
            break
        fit = cold(failed)
        coefs[failed - j0], basis, m = fit.alpha_hat, fit.basis, failed + 1
    for idx in np.flatnonzero(status[:-1] == 1):
        coefs[idx] = cold(j0 + idx).alpha_hat
    coefs[-1] = full.alpha_hat
    return EstimatePath(j0, coefs, tau, epsilon, n)
