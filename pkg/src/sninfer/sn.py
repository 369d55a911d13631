"""Self-normalized test statistic, normalizer and confidence intervals.

For a path of expanding-window estimates ``theta(j/n)``, ``j = j0..n``, and a
contrast ``A`` the normalizer is

    S_n = n^{-2} sum_{j=j0+1}^{n} j^2 d_j d_j',   d_j = A theta(j/n) - A theta(1)

and the statistic ``T_n = n d' S_n^{-1} d`` with ``d = A theta(1) - null``.
The same code serves quantile and expected shortfall paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import DegenerateStatisticError
from .limitdist import CriticalValueTable, critical_value, default_table
from .qr import RANK_RTOL, EstimatePath

COND_LIMIT = 1e12


@dataclass(frozen=True)
class Contrast:
    """Linear restriction ``A theta = null_value``."""

    a_matrix: np.ndarray
    null_value: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.a_matrix, dtype=float))
        r = np.atleast_1d(np.array(self.null_value, dtype=float))
        ell, k = A.shape
        if not 1 <= ell <= k:
            raise ValueError(f"contrast needs 1 <= ell <= k, got {ell}x{k}")
        if r.shape != (ell,):
            raise ValueError(f"null_value must have length {ell}")
        sv = np.linalg.svd(A, compute_uv=False)
        if sv[-1] <= RANK_RTOL * sv[0]:
            raise ValueError("contrast matrix must have full row rank")
        A.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "a_matrix", A)
        object.__setattr__(self, "null_value", r)

    @property
    def ell(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def k(self) -> int:
        return self.a_matrix.shape[1]

    @classmethod
    def coefficient(cls, k: int, index: int, null_value: float = 0.0) -> "Contrast":
        """Restriction on a single coefficient."""
        A = np.zeros((1, k))
        A[0, index] = 1.0
        return cls(A, [null_value])


@dataclass(frozen=True)
class SnTestResult:
    t_n: float
    s_n: np.ndarray
    critical_value: float
    reject: bool
    nu: float
    estimate: np.ndarray
    ci: tuple | None = None
    p_value: float | None = None
    p_value_halfwidth: float | None = None


def _contrast_path(path: EstimatePath, contrast: Contrast) -> np.ndarray:
    coefs = np.asarray(path.coefficients, dtype=float)
    if coefs.shape[1] != contrast.k:
        raise ValueError(f"contrast has {contrast.k} columns but the path has {coefs.shape[1]}")
    return coefs @ contrast.a_matrix.T


def sn_matrix(path: EstimatePath, contrast: Contrast) -> np.ndarray:
    """The self-normalizer; the sum starts one past the first stored window."""
    a = _contrast_path(path, contrast)
    n = path.n
    j = np.arange(path.j_start + 1, n + 1, dtype=float)
    d = (a[1:] - a[-1]) * j[:, None]
    S = d.T @ d / float(n) ** 2
    return (S + S.T) / 2


def _resolve_table(path, contrast, critical):
    if critical is None:
        return default_table(contrast.ell, path.epsilon)
    if critical.ell != contrast.ell:
        raise ValueError(f"critical table is for ell={critical.ell}, contrast has ell={contrast.ell}")
    if abs(critical.epsilon - path.epsilon) > 1e-12:
        raise ValueError(f"critical table is for epsilon={critical.epsilon}, path uses {path.epsilon}")
    return critical


def _factor(S):
    ev = np.linalg.eigvalsh(S)
    if ev[-1] <= 0 or ev[0] <= ev[-1] / COND_LIMIT:
        raise DegenerateStatisticError(
            "self-normalizer is singular or ill-conditioned; the estimate path is (nearly) constant")
    return linalg.cho_factor(S)


def sn_test(path: EstimatePath, contrast: Contrast, nu: float = 0.05,
            critical: CriticalValueTable | None = None) -> SnTestResult:
    """Test ``A theta = null`` with the self-normalized statistic.

    ``critical`` defaults to the cached table for ``(ell, path.epsilon)``.
    """
    table = _resolve_table(path, contrast, critical)
    cv = critical_value(table, nu)
    S = sn_matrix(path, contrast)
    factor = _factor(S)
    n = path.n
    est = _contrast_path(path, contrast)[-1]
    d = est - contrast.null_value
    t_n = float(n * d @ linalg.cho_solve(factor, d))
    t_n = max(t_n, 0.0)
    ci = None
    if contrast.ell == 1:
        half = float(np.sqrt(S[0, 0] * cv / n))
        ci = (float(est[0] - half), float(est[0] + half))
    p = hw = None
    if table.samples is not None:
        p, hw = table.p_value(t_n)
    return SnTestResult(t_n, S, cv, bool(t_n > cv), float(nu), est, ci, p, hw)


def sn_confidence_interval(path: EstimatePath, coefficient_index: int, nu: float = 0.05,
                           critical: CriticalValueTable | None = None) -> tuple[float, float]:
    """Symmetric ``1 - nu`` interval for one coefficient."""
    k = np.asarray(path.coefficients).shape[1]
    res = sn_test(path, Contrast.coefficient(k, coefficient_index), nu, critical)
    return res.ci
