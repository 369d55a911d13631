"""Simulation of the self-normalized limit law and cached critical-value tables.

The limit is ``W(1)' V^{-1} W(1)`` with ``W`` an l-dimensional standard
Brownian motion and ``V = int_eps^1 B(s) B(s)' ds`` for the bridge-type
process ``B(s) = W(s) - s W(1)``.  Brownian paths are discretized on
``{1/G, ..., 1}`` and ``V`` is a right-endpoint Riemann sum over grid points
``ceil(G*eps)/G, ..., 1``.

Replications are generated in fixed-size blocks, block ``b`` drawing from
``SeedSequence(seed, spawn_key=(b,))``.  The sorted output therefore depends
only on ``(ell, epsilon, G, R, seed)``, never on how blocks are scheduled.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import check_epsilon

DEFAULT_GRID = 2000
DEFAULT_REPS = 100_000
DEFAULT_SEED = 20240917
DEFAULT_PROBS = (0.90, 0.95, 0.99)
BLOCK = 250
CACHE_VERSION = 1
_MAX_RETRIES = 3
_COND_LIMIT = 1e12


def _grid_start(grid_steps: int, epsilon: float) -> int:
    # 1-based index of the first grid point at or beyond epsilon
    return max(1, math.ceil(grid_steps * epsilon - 1e-9))


def _quadratic_forms(inc, start, A):
    """Limit-law draws from increments of shape ``(m, G, k)``.

    Returns the draws and a mask of replications whose ``V`` is numerically
    singular.
    """
    G = inc.shape[1]
    W = np.cumsum(inc, axis=1)
    w1 = W[:, -1, :]
    s = np.arange(start, G + 1) / G
    B = W[:, start - 1:, :] - s[None, :, None] * w1[:, None, :]
    if A is not None:
        B = B @ A.T
        w1 = w1 @ A.T
    V = np.einsum("rgi,rgj->rij", B, B) / G
    ev = np.linalg.eigvalsh(V)
    bad = ev[:, 0] <= ev[:, -1] / _COND_LIMIT
    V[bad] = np.eye(V.shape[1])
    z = np.linalg.solve(V, w1[..., None])[..., 0]
    return np.einsum("ri,ri->r", w1, z), bad


def _block(seed, b, count, k, grid_steps, start, A):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
    inc = rng.standard_normal((count, grid_steps, k)) / np.sqrt(grid_steps)
    out, bad = _quadratic_forms(inc, start, A)
    for i in np.flatnonzero(bad):
        for attempt in range(1, _MAX_RETRIES + 1):
            sub = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b, int(i), attempt)))
            inc1 = sub.standard_normal((1, grid_steps, k)) / np.sqrt(grid_steps)
            val, still = _quadratic_forms(inc1, start, A)
            if not still[0]:
                out[i] = val[0]
                break
        else:
            raise FloatingPointError(
                f"Riemann-sum V singular after {_MAX_RETRIES} redraws (block {b}, draw {i})")
    return out


def simulate_w_samples(ell: int, epsilon: float, grid_steps: int = DEFAULT_GRID,
                       replications: int = DEFAULT_REPS, seed: int = DEFAULT_SEED,
                       contrast=None, threads: int = 1) -> np.ndarray:
    """Sorted draws from the limit law with ``ell`` restrictions.

    With ``contrast`` (an ``ell x k`` full-row-rank matrix) the k-dimensional
    process is simulated and projected, which has the same law as the
    ``ell``-dimensional case; this is exposed for checking that invariance.
    """
    ell = int(ell)
    epsilon = check_epsilon(epsilon)
    grid_steps, replications = int(grid_steps), int(replications)
    if ell < 1:
        raise ValueError("ell must be positive")
    if grid_steps < 100:
        raise ValueError("grid_steps must be at least 100")
    if replications < 1000:
        raise ValueError("replications must be at least 1000")
    if math.floor(grid_steps * epsilon + 1e-9) < 1:
        raise ValueError("grid too coarse for epsilon")
    A = None
    k = ell
    if contrast is not None:
        A = np.atleast_2d(np.asarray(contrast, dtype=float))
        if A.shape[0] != ell:
            raise ValueError(f"contrast has {A.shape[0]} rows, expected {ell}")
        sv = np.linalg.svd(A, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise ValueError("contrast must have full row rank")
        k = A.shape[1]
    start = _grid_start(grid_steps, epsilon)
    nblocks = -(-replications // BLOCK)
    sizes = [min(BLOCK, replications - b * BLOCK) for b in range(nblocks)]
    seed = int(seed)

    def job(b):
        return _block(seed, b, sizes[b], k, grid_steps, start, A)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, range(nblocks)))
    else:
        parts = [job(b) for b in range(nblocks)]
    out = np.sort(np.concatenate(parts))
    if not np.all(np.isfinite(out)) or out[0] < 0:
        raise FloatingPointError("non-finite or negative limit-law draw")
    return out


def order_statistic(sorted_samples: np.ndarray, prob: float) -> float:
    """The ``ceil(prob * R)``-th smallest draw."""
    R = len(sorted_samples)
    idx = max(1, math.ceil(prob * R - 1e-9))
    return float(sorted_samples[idx - 1])


def digest(samples: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(samples, dtype="<f8").tobytes()).hexdigest()


@dataclass(frozen=True)
class CriticalValueTable:
    ell: int
    epsilon: float
    grid_steps: int
    replications: int
    seed: int
    quantiles: dict
    samples_digest: str
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)

    def p_value(self, statistic: float) -> tuple[float, float]:
        """Tail fraction of the simulated sample at or above ``statistic``,
        with a 95% Monte Carlo half-width."""
        if self.samples is None:
            raise ValueError("p-values need the simulated sample")
        R = len(self.samples)
        p = (R - np.searchsorted(self.samples, statistic, side="left")) / R
        return float(p), float(1.96 * math.sqrt(p * (1 - p) / R))


def build_table(samples: np.ndarray, ell, epsilon, grid_steps, replications, seed,
                probs=DEFAULT_PROBS) -> CriticalValueTable:
    q = {float(p): order_statistic(samples, p) for p in sorted(probs)}
    vals = list(q.values())
    if any(v <= 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
        raise ValueError("tabulated quantiles must be positive and strictly increasing")
    samples = np.asarray(samples, dtype=float)
    samples.setflags(write=False)
    return CriticalValueTable(int(ell), float(epsilon), int(grid_steps), int(replications),
                              int(seed), q, digest(samples), samples)


def critical_value(table: CriticalValueTable, nu: float) -> float:
    """The ``(1 - nu)`` quantile of the limit law from ``table``."""
    nu = float(nu)
    if not 0 < nu < 1:
        raise ValueError(f"nu must lie in (0, 1), got {nu}")
    prob = 1 - nu
    for p, v in table.quantiles.items():
        if abs(p - prob) < 1e-12:
            return v
    if table.samples is None:
        raise ValueError(f"probability {prob} is not tabulated and no sample is attached")
    return order_statistic(table.samples, prob)


def cache_dir() -> Path:
    env = os.environ.get("SNINFER_CACHE_DIR")
    return Path(env) if env else Path.home() / ".cache" / "sninfer"


def _cache_path(ell, epsilon, grid_steps, replications, seed, directory=None) -> Path:
    base = Path(directory) if directory is not None else cache_dir()
    return base / f"w_v{CACHE_VERSION}_l{ell}_e{epsilon!r}_g{grid_steps}_r{replications}_s{seed}.npz"


def save_table(table: CriticalValueTable, path) -> None:
    """Write header fields and the sorted sample to an ``.npz`` file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".{os.getpid()}.tmp.npz")
    np.savez(tmp, version=CACHE_VERSION, ell=table.ell, epsilon=table.epsilon,
             grid_steps=table.grid_steps, replications=table.replications,
             seed=np.uint64(table.seed), count=len(table.samples), samples=table.samples,
             digest=table.samples_digest)
    os.replace(tmp, path)


def load_table(path, probs=DEFAULT_PROBS) -> CriticalValueTable:
    with np.load(path) as f:
        if int(f["version"]) != CACHE_VERSION:
            raise ValueError(f"{path}: unsupported cache version {int(f['version'])}")
        samples = np.array(f["samples"], dtype=float)
        if len(samples) != int(f["count"]) or digest(samples) != str(f["digest"]):
            raise ValueError(f"{path}: corrupt cache file")
        return build_table(samples, int(f["ell"]), float(f["epsilon"]), int(f["grid_steps"]),
                           int(f["replications"]), int(f["seed"]), probs)


def get_table(ell: int, epsilon: float, grid_steps: int = DEFAULT_GRID,
              replications: int = DEFAULT_REPS, seed: int = DEFAULT_SEED,
              probs=DEFAULT_PROBS, threads: int = 1, use_cache: bool = True,
              directory=None) -> CriticalValueTable:
    """Load the table from the on-disk cache or simulate and store it."""
    epsilon = check_epsilon(epsilon)
    path = _cache_path(int(ell), epsilon, int(grid_steps), int(replications), int(seed), directory)
    if use_cache and path.exists():
        try:
            return load_table(path, probs)
        except (ValueError, OSError, KeyError):
            pass
    samples = simulate_w_samples(ell, epsilon, grid_steps, replications, seed, threads=threads)
    table = build_table(samples, ell, epsilon, grid_steps, replications, seed, probs)
    if use_cache:
        try:
            save_table(table, path)
        except OSError:
            pass
    return table


_memo: dict = {}


def default_table(ell: int, epsilon: float, threads: int = 1) -> CriticalValueTable:
    """Process-wide memoized :func:`get_table` with default settings."""
    key = (int(ell), float(epsilon))
    if key not in _memo:
        _memo[key] = get_table(ell, epsilon, threads=threads)
    return _memo[key]
