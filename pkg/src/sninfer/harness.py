"""Monte Carlo size/power experiments and the empirical-application runner."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import baselines, dgp, dq
from .data import TimeSeriesDataset, check_epsilon, check_tau
from .esr import check_side, default_epsilon, expanding_es_path
from .exceptions import DegenerateStatisticError, EstimationError, ExperimentAborted, SnInferError
from .limitdist import CriticalValueTable, critical_value, default_table
from .qr import expanding_qr_path, fit_qr
from .sn import Contrast, sn_matrix, sn_test

METHODS = ("sn", "iid", "hac")
TARGETS = ("quantile", "es")
SCHEMA = "# sninfer rejection-table v1"
EMPIRICAL_SCHEMA = "# sninfer empirical-table v1"
MAX_FAILURE_RATE = 0.01
SLOPE = 1


def sweep(start: float, stop: float, step: float) -> tuple[float, ...]:
    """Inclusive grid ``start, start + step, ..., stop`` rounded to 10 decimals."""
    if step <= 0 or stop < start:
        raise ValueError("sweep needs step > 0 and stop >= start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + i * step, 10) for i in range(count))


@dataclass(frozen=True)
class ExperimentConfig:
    """One cell of the simulation study, possibly swept over the null value.

    ``epsilon=None`` picks the default trimming fraction for the target.
    Expected shortfall experiments use the upper tail and the SN test only.
    """

    dgp: dgp.DgpConfig = field(default_factory=dgp.DgpConfig)
    tau: float = 0.5
    epsilon: float | None = None
    methods: tuple = ("sn",)
    target: str = "quantile"
    delta2_circ: tuple = (1.0,)
    replications: int = 2000
    nu: float = 0.05
    base_seed: int = 1
    threads: int = 1
    keep_stats: bool = False
    critical: CriticalValueTable | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        check_tau(self.tau)
        if int(self.replications) < 1:
            raise ValueError("replications must be at least 1")
        if not 0 < self.nu < 1:
            raise ValueError("nu must lie in (0, 1)")
        methods = tuple(m.lower() for m in self.methods)
        if not methods or any(m not in METHODS for m in methods):
            raise ValueError(f"methods must be a non-empty subset of {METHODS}")
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}")
        if self.target == "es" and set(methods) - {"sn"}:
            raise ValueError("expected shortfall experiments support the sn method only")
        d2 = self.delta2_circ
        d2 = (float(d2),) if np.isscalar(d2) else tuple(float(v) for v in d2)
        if not d2:
            raise ValueError("delta2_circ sweep is empty")
        eps = self.epsilon
        if eps is None:
            eps = default_epsilon(self.target, self.dgp.n, self.tau)
        object.__setattr__(self, "epsilon", check_epsilon(eps))
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "delta2_circ", d2)
        object.__setattr__(self, "replications", int(self.replications))
        object.__setattr__(self, "threads", max(1, int(self.threads)))

    def null_values(self) -> np.ndarray:
        return np.array([dgp.null_hypothesis_value(self.dgp, self.tau, d, self.target)
                         for d in self.delta2_circ])


@dataclass(frozen=True)
class RejectionRow:
    n: int
    rho: float
    tau: float
    target: str
    method: str
    delta2_circ: float
    null_value: float
    rejection_pct: float
    mc_se_pct: float
    replications: int
    failures: int
    epsilon: float
    nu: float


def _mc_se(pct: float, reps: int) -> float:
    p = pct / 100
    return 100 * math.sqrt(p * (1 - p) / reps) if reps else float("nan")


@dataclass
class RejectionTable:
    """Rejection frequencies in percent, one row per (method, null value).

    ``stats[method]`` holds the raw statistics (replications x null values,
    NaN for failed replications) when retention was requested; ``T_n`` for
    the SN test and ``|t|`` for the baselines.
    """

    rows: list
    config: ExperimentConfig | None = None
    stats: dict | None = None

    def row(self, method: str, delta2_circ: float | None = None) -> RejectionRow:
        for r in self.rows:
            if r.method == method and (delta2_circ is None or abs(r.delta2_circ - delta2_circ) < 1e-9):
                return r
        raise KeyError((method, delta2_circ))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(SCHEMA + "\n")
        names = list(RejectionRow.__dataclass_fields__)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, k)) for k in names])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 10))
    return str(v)


def _critical(config: ExperimentConfig):
    if "sn" not in config.methods:
        return None
    table = config.critical if config.critical is not None else default_table(1, config.epsilon)
    if abs(table.epsilon - config.epsilon) > 1e-12 or table.ell != 1:
        raise ValueError("critical table does not match ell=1 and the experiment epsilon")
    return table


def _replicate(config: ExperimentConfig, r: int, nulls: np.ndarray):
    """Statistics for replication ``r``: method -> array over nulls, or None on failure."""
    data = dgp.generate(config.dgp, rng=dgp.replication_rng(config.base_seed, r))
    out = {}
    alpha_hat = None
    if "sn" in config.methods:
        try:
            qpath = expanding_qr_path(data, config.tau, config.epsilon)
            path = qpath if config.target == "quantile" else \
                expanding_es_path(data, config.tau, config.epsilon, "upper", qr_path=qpath)
            alpha_hat = qpath.full
            S = sn_matrix(path, Contrast.coefficient(data.k, SLOPE))[0, 0]
            if not S > 0:
                raise DegenerateStatisticError("zero self-normalizer")
            out["sn"] = data.n * (path.full[SLOPE] - nulls) ** 2 / S
        except (EstimationError, DegenerateStatisticError):
            out["sn"] = None
    for mode in ("iid", "hac"):
        if mode not in config.methods:
            continue
        try:
            if alpha_hat is None:
                alpha_hat = fit_qr(data, config.tau).alpha_hat
            var = baselines.estimate_variance(data, config.tau, alpha_hat, mode)
            v = var.sandwich[SLOPE, SLOPE]
            if not v > 0:
                raise EstimationError("non-positive variance")
            out[mode] = np.abs(alpha_hat[SLOPE] - nulls) / math.sqrt(v / data.n)
        except EstimationError:
            out[mode] = None
    return out


def _simulate(config: ExperimentConfig) -> RejectionTable:
    nulls = config.null_values()
    table = _critical(config)
    R = config.replications
    raw = {m: np.full((R, len(nulls)), np.nan) for m in config.methods}

    def work(lo, hi):
        for r in range(lo, hi):
            for m, v in _replicate(config, r, nulls).items():
                if v is not None:
                    raw[m][r] = v

    chunk = max(1, -(-R // (config.threads * 4)))
    bounds = [(lo, min(R, lo + chunk)) for lo in range(0, R, chunk)]
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            list(pool.map(lambda b: work(*b), bounds))
    else:
        for b in bounds:
            work(*b)

    z = stats.norm.ppf(1 - config.nu / 2)
    thresholds = {"sn": critical_value(table, config.nu) if table is not None else None,
                  "iid": z, "hac": z}
    rows = []
    worst = 0
    for m in config.methods:
        ok = ~np.isnan(raw[m][:, 0])
        done = int(ok.sum())
        worst = max(worst, R - done)
        for i, (d2, nv) in enumerate(zip(config.delta2_circ, nulls)):
            pct = 100 * float(np.mean(raw[m][ok, i] > thresholds[m])) if done else float("nan")
            rows.append(RejectionRow(config.dgp.n, config.dgp.rho, config.tau, config.target, m,
                                     d2, float(nv), pct, _mc_se(pct, done), done, R - done,
                                     config.epsilon, config.nu))
    result = RejectionTable(rows, config, raw if config.keep_stats else None)
    if worst > MAX_FAILURE_RATE * R:
        raise ExperimentAborted(
            f"{worst} of {R} replications failed (limit {MAX_FAILURE_RATE:.0%}); "
            "a larger epsilon or sample size is needed", result)
    return result


def run_size_experiment(config: ExperimentConfig) -> RejectionTable:
    """Rejection frequency of the true null ``delta2_circ = delta_2``."""
    return _simulate(replace(config, delta2_circ=(config.dgp.delta[1],)))


def run_power_experiment(config: ExperimentConfig) -> RejectionTable:
    """Rejection frequency at each null value of the sweep.

    Every null value is tested on the same simulated samples, so the row at
    the true value reproduces :func:`run_size_experiment` with the same seed.
    """
    return _simulate(config)


def size_adjust(power_table: RejectionTable, size_table: RejectionTable) -> RejectionTable:
    """Recompute power with each method's empirical null ``(1 - nu)`` quantile as critical value."""
    if power_table.stats is None or size_table.stats is None:
        raise ValueError("size adjustment needs raw statistics; rerun with keep_stats=True")
    cfg = power_table.config
    rows = []
    for m in cfg.methods:
        if m not in size_table.stats:
            raise ValueError(f"size table has no statistics for method {m!r}")
        null_stats = size_table.stats[m][:, 0]
        null_stats = np.sort(null_stats[~np.isnan(null_stats)])
        if not len(null_stats):
            raise ValueError(f"no completed size replications for method {m!r}")
        nu = size_table.config.nu
        crit = null_stats[max(1, math.ceil((1 - nu) * len(null_stats) - 1e-9)) - 1]
        ok = ~np.isnan(power_table.stats[m][:, 0])
        done = int(ok.sum())
        for i, old in enumerate(r for r in power_table.rows if r.method == m):
            pct = 100 * float(np.mean(power_table.stats[m][ok, i] > crit))
            rows.append(replace(old, method=f"{m}-adjusted", rejection_pct=pct,
                                mc_se_pct=_mc_se(pct, done)))
    return RejectionTable(rows, cfg, None)


@dataclass(frozen=True)
class EmpiricalRow:
    tau: float
    target: str
    side: str
    coefficient: str
    estimate: float
    ci_low: float
    ci_high: float
    dq_statistic: float
    dq_p_value: float


def run_empirical(data: TimeSeriesDataset, tau_grid, target: str = "quantile",
                  side: str = "upper", epsilon: float | None = None, nu: float = 0.05,
                  dq_lags: int = 10, critical: CriticalValueTable | None = None) -> list:
    """Full-sample coefficients with SN confidence intervals for each ``tau``.

    Quantile fits also report the dynamic quantile test of their hits;
    expected shortfall rows carry NaN there.
    """
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}")
    check_side(side)
    rows = []
    for tau in tau_grid:
        tau = check_tau(tau)
        eps = default_epsilon(target, data.n, tau) if epsilon is None else epsilon
        try:
            qpath = expanding_qr_path(data, tau, eps)
            path = qpath if target == "quantile" else expanding_es_path(data, tau, eps, side, qpath)
            dq_stat = dq_p = float("nan")
            if target == "quantile":
                try:
                    res = dq.dq_test(dq.compute_hits(data, tau, qpath.full), dq_lags)
                    dq_stat, dq_p = res.statistic, res.p_value
                except (DegenerateStatisticError, ValueError):
                    pass
            for c, name in enumerate(data.names):
                t = sn_test(path, Contrast.coefficient(data.k, c), nu, critical)
                rows.append(EmpiricalRow(tau, target, side if target == "es" else "",
                                         name, float(path.full[c]), t.ci[0], t.ci[1], dq_stat, dq_p))
        except SnInferError as exc:
            raise type(exc)(f"tau={tau}: {exc}") from exc
    return rows


def empirical_csv(rows, path=None) -> str:
    buf = io.StringIO()
    buf.write(EMPIRICAL_SCHEMA + "\n")
    names = list(EmpiricalRow.__dataclass_fields__)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in rows:
        w.writerow([_fmt(getattr(r, k)) for k in names])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
