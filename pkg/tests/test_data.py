import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sninfer.data import (TimeSeriesDataset, check_epsilon, check_tau, load_config, load_csv,
                          trim_start, write_csv)
from sninfer.exceptions import DataError


def write(path, text):
    path.write_text(text)
    return path


def test_three_rows_with_intercept(tmp_path):
    f = write(tmp_path / "a.csv", "y,x\n1,4\n2,5\n3,6\n")
    d = load_csv(f, "y", ["x"])
    assert (d.n, d.k) == (3, 2)
    np.testing.assert_array_equal(d.x[:, 0], [1, 1, 1])
    assert d.names == ("const", "x")


def test_lag_pairs_response_with_previous_row(tmp_path):
    f = write(tmp_path / "a.csv", "y,x\n1,10\n2,20\n3,30\n4,40\n5,50\n")
    d = load_csv(f, "y", ["x"], lag=1)
    assert d.n == 4
    np.testing.assert_array_equal(d.y, [2, 3, 4, 5])
    np.testing.assert_array_equal(d.x[:, 1], [10, 20, 30, 40])


def test_lagged_predictor_matches_hand_alignment(tmp_path):
    # equity-premium style file; the hand-aligned rows below pair
    # equity_premium[t] with svar[t-1]
    rng = np.random.default_rng(0)
    ep = rng.normal(size=12).round(6)
    svar = rng.uniform(0, 0.01, size=12).round(8)
    text = "date,equity_premium,svar\n" + "".join(
        f"{190001 + i},{float(ep[i])!r},{float(svar[i])!r}\n" for i in range(12))
    d = load_csv(write(tmp_path / "gw.csv", text), "equity_premium", ["svar"], lag=1)
    hand = [(ep[t], svar[t - 1]) for t in range(1, 11)]
    for row, (yt, xt) in enumerate(hand):
        assert d.y[row] == yt and d.x[row, 1] == xt


def test_missing_column(tmp_path):
    f = write(tmp_path / "a.csv", "y,x\n1,2\n")
    with pytest.raises(DataError, match="'z'"):
        load_csv(f, "y", ["z"])


def test_unparseable_cell_reports_row_and_column(tmp_path):
    f = write(tmp_path / "a.csv", "y,x\n1,2\n3,abc\n4,5\n")
    with pytest.raises(DataError, match=r"row 2, column 'x'"):
        load_csv(f, "y", ["x"])


def test_missing_value_rejected(tmp_path):
    f = write(tmp_path / "a.csv", "y,x\n1,2\n3,\n4,5\n")
    with pytest.raises(DataError, match="row 2"):
        load_csv(f, "y", ["x"])


def test_too_few_rows(tmp_path):
    f = write(tmp_path / "a.csv", "y,x\n1,2\n3,4\n")
    with pytest.raises(DataError, match="too few"):
        load_csv(f, "y", ["x"])


def test_lag_too_large(tmp_path):
    f = write(tmp_path / "a.csv", "y,x\n1,2\n3,4\n")
    with pytest.raises(DataError):
        load_csv(f, "y", ["x"], lag=2)


def test_dataset_validation():
    with pytest.raises(DataError):
        TimeSeriesDataset([1.0, np.nan], np.ones((2, 1)))
    with pytest.raises(DataError):
        TimeSeriesDataset([1.0, 2.0], np.ones((3, 1)))
    d = TimeSeriesDataset([1.0, 2.0], np.ones((2, 1)))
    with pytest.raises(ValueError):
        d.y[0] = 5.0


def test_round_trip_precision(tmp_path):
    rng = np.random.default_rng(1)
    d = TimeSeriesDataset(rng.normal(size=20) * 1e3, np.column_stack([np.ones(20), rng.normal(size=20)]),
                          ("const", "x"))
    write_csv(d, tmp_path / "out.csv")
    back = load_csv(tmp_path / "out.csv", "y", ["x"])
    np.testing.assert_array_equal(back.y, d.y)
    np.testing.assert_array_equal(back.x, d.x)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), st.integers(6, 15), st.integers(0, 10_000))
def test_lag_then_truncate_equals_truncate_then_lag(lag, m, seed):
    rng = np.random.default_rng(seed)
    rows = rng.normal(size=(20, 2))
    full = TimeSeriesDataset(rows[lag:, 0], np.column_stack([np.ones(20 - lag), rows[:20 - lag, 1]]))
    cut = rows[:m]
    trunc = TimeSeriesDataset(cut[lag:, 0], np.column_stack([np.ones(m - lag), cut[:m - lag, 1]]))
    np.testing.assert_array_equal(full.y[:trunc.n], trunc.y)
    np.testing.assert_array_equal(full.x[:trunc.n], trunc.x)


def test_lag_then_truncate_via_files(tmp_path):
    rng = np.random.default_rng(2)
    rows = rng.normal(size=(15, 2))
    text = "y,x\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in rows)
    full = load_csv(write(tmp_path / "f.csv", text), "y", ["x"], lag=2)
    short = "y,x\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in rows[:9])
    part = load_csv(write(tmp_path / "s.csv", short), "y", ["x"], lag=2)
    np.testing.assert_array_equal(full.y[:part.n], part.y)
    np.testing.assert_array_equal(full.x[:part.n], part.x)


def test_validators():
    assert check_tau(0.5) == 0.5
    for bad in (0, 1, -0.1, 1.5):
        with pytest.raises(ValueError):
            check_tau(bad)
        with pytest.raises(ValueError):
            check_epsilon(bad)
    assert trim_start(100, 0.3) == 30
    assert trim_start(100, 0.29) == 29
    assert trim_start(200, 0.1) == 20


def test_load_config(tmp_path):
    f = write(tmp_path / "c.cfg", "# comment\ntau = 0.9\n\nreps=100  # trailing\n")
    assert load_config(f) == {"tau": "0.9", "reps": "100"}
    with pytest.raises(DataError):
        load_config(write(tmp_path / "bad.cfg", "novalue\n"))
