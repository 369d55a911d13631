"""Datasets, argument validation and CSV / key-value configuration I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError

INTERCEPT_NAME = "const"


def check_tau(tau: float) -> float:
    """Validate a quantile level in the open unit interval."""
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    return tau


def check_epsilon(epsilon: float) -> float:
    """Validate a trimming fraction in the open unit interval."""
    epsilon = float(epsilon)
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    return epsilon


def trim_start(n: int, epsilon: float) -> int:
    """Return floor(n * epsilon), robust to representation error in epsilon.

    ``0.3 * 100`` evaluates to ``30.000000000000004`` but ``0.29 * 100`` to
    ``28.999999999999996``; a tiny upward nudge makes both land on the
    intended integer.
    """
    return int(math.floor(n * epsilon + 1e-9))


@dataclass(frozen=True)
class TimeSeriesDataset:
    """A sample of responses ``y`` and contemporaneous covariate rows ``x``.

    Row ``t`` of ``x`` is the covariate vector paired with ``y[t]``; any
    lagging of predictors happens before construction (see :func:`load_csv`).
    Arrays are copied and made read-only.
    """

    y: np.ndarray
    x: np.ndarray
    names: tuple[str, ...] = field(default=())
    response_name: str = "y"

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise DataError("x must be a 2-d array")
        if y.shape[0] < 1 or x.shape[1] < 1:
            raise DataError("dataset needs n >= 1 and k >= 1")
        if x.shape[0] != y.shape[0]:
            raise DataError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise DataError("dataset contains non-finite entries")
        names = tuple(self.names) if self.names else tuple(f"x{i}" for i in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DataError(f"{len(names)} names given for {x.shape[1]} columns")
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    def head(self, m: int) -> "TimeSeriesDataset":
        """The first ``m`` observations."""
        return TimeSeriesDataset(self.y[:m], self.x[:m], self.names, self.response_name)

    def mirrored(self) -> "TimeSeriesDataset":
        """The same design with the response sign-flipped."""
        return TimeSeriesDataset(-self.y, self.x, self.names, self.response_name)


def _parse_cell(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}, column {column!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {column!r}: non-finite value {text!r}")
    return value


def load_csv(path, response_col: str, covariate_cols, intercept: bool = True,
             lag: int = 0) -> TimeSeriesDataset:
    """Read a comma-separated file with a header row into a dataset.

    Covariates are shifted back by ``lag`` rows, so response row ``t`` is
    paired with covariate row ``t - lag`` and the first ``lag`` responses are
    dropped. Missing or unparseable cells raise :class:`DataError` naming the
    offending (1-based, header excluded) row and column.
    """
    covariate_cols = list(covariate_cols)
    if lag < 0:
        raise DataError("lag must be nonnegative")
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        wanted = [response_col] + covariate_cols
        for col in wanted:
            if col not in header:
                raise DataError(f"column {col!r} not found in {path} (have {header})")
        index = {col: header.index(col) for col in wanted}
        rows = []
        for lineno, raw in enumerate(reader, start=1):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            if len(raw) < len(header):
                raise DataError(f"row {lineno}: expected {len(header)} fields, found {len(raw)}")
            rows.append([_parse_cell(raw[index[c]].strip(), lineno, c) for c in wanted])
    table = np.array(rows, dtype=float).reshape(len(rows), len(wanted))
    if lag >= table.shape[0]:
        raise DataError(f"lag={lag} leaves no observations from {table.shape[0]} rows")
    y = table[lag:, 0]
    x = table[: table.shape[0] - lag, 1:]
    names = list(covariate_cols)
    if intercept:
        x = np.column_stack([np.ones(len(y)), x])
        names = [INTERCEPT_NAME] + names
    if len(y) < x.shape[1] + 1:
        raise DataError(f"n={len(y)} observations are too few for k={x.shape[1]} regressors")
    return TimeSeriesDataset(y, x, tuple(names), response_col)


def write_csv(dataset: TimeSeriesDataset, path) -> None:
    """Write the response and all covariate columns with round-trip precision.

    ``path`` may also be an open text stream.
    """
    if hasattr(path, "write"):
        _write_rows(dataset, path)
        return
    with Path(path).open("w", newline="") as fh:
        _write_rows(dataset, fh)


def _write_rows(dataset, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([dataset.response_name, *dataset.names])
    for yt, xt in zip(dataset.y, dataset.x):
        writer.writerow([repr(float(yt)), *(repr(float(v)) for v in xt)])


def load_config(path) -> dict[str, str]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise DataError(f"{path}:{lineno}: empty key")
        out[key] = value
    return out
