import csv
import io

import numpy as np
import pytest

from sninfer import dgp
from sninfer.cli import main


def rows_of(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_critval_deterministic(tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        argv = ["critval", "--ell", "1", "--epsilon", "0.1", "--reps", "2000", "--grid", "200",
                "--seed", "7", "--no-cache", "--out", str(tmp_path / name)]
        assert main(argv) == 0
        outs.append((tmp_path / name).read_text())
    assert outs[0] == outs[1]
    q = [float(r["quantile"]) for r in rows_of(outs[0])]
    assert q == sorted(q)


def test_simulate_size_row(tmp_path, capsys):
    assert main(["simulate-size", "--preset", "table1", "--n", "100", "--rho", "0", "--tau", "0.5",
                 "--method", "sn,hac", "--reps", "30", "--seed", "1"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("# sninfer rejection-table v1")
    rows = rows_of(text)
    assert [r["method"] for r in rows] == ["sn", "hac"]
    assert all(int(r["replications"]) + int(r["failures"]) == 30 for r in rows)
    assert float(rows[0]["mc_se_pct"]) >= 0


def test_simulate_power_size_adjusted(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["simulate-power", "--n", "100", "--reps", "40", "--delta2", "0.5,1.0,1.5",
                 "--size-adjust", "--keep-stats", "--out", str(out)]) == 0
    rows = rows_of(out.read_text())
    assert [r["method"] for r in rows] == ["sn"] * 3 + ["sn-adjusted"] * 3
    assert float(rows[4]["rejection_pct"]) == pytest.approx(5.0)
    with np.load(str(out) + ".stats.npz") as f:
        assert f["sn"].shape == (40, 3)


def test_fit_es_on_generated_data(tmp_path):
    cfg = dgp.DgpConfig(n=1000)
    truth = dgp.true_coefficients(cfg, 0.9).beta0_upper
    est = []
    for seed in range(12):
        path = tmp_path / f"d{seed}.csv"
        assert main(["generate", "--n", "1000", "--seed", str(seed), "--out", str(path)]) == 0
        out = tmp_path / f"f{seed}.csv"
        assert main(["fit", "--target", "es", "--tau", "0.9", "--epsilon", "0.25",
                     str(path), "--out", str(out)]) == 0
        rows = rows_of(out.read_text())
        assert [r["coefficient"] for r in rows] == ["const", "x"]
        est.append([float(r["estimate"]) for r in rows])
    est = np.array(est)
    se = est.std(axis=0, ddof=1) / np.sqrt(len(est))
    assert np.all(np.abs(est.mean(axis=0) - truth) <= 3 * se + 0.02)


def test_config_file_and_override(tmp_path, capsys):
    data = tmp_path / "d.csv"
    main(["generate", "--n", "300", "--seed", "3", "--out", str(data)])
    conf = tmp_path / "run.conf"
    conf.write_text("# quantile fit\ntau = 0.25,0.75\ndq-lags = 4\n")
    assert main(["fit", "--config", str(conf), str(data)]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert sorted({float(r["tau"]) for r in rows}) == [0.25, 0.75]
    assert main(["fit", "--config", str(conf), "--tau", "0.5", str(data)]) == 0
    assert {float(r["tau"]) for r in rows_of(capsys.readouterr().out)} == {0.5}


def test_dq_command(tmp_path, capsys):
    data = tmp_path / "d.csv"
    main(["generate", "--preset", "persistent", "--n", "500", "--seed", "2", "--out", str(data)])
    assert main(["dq-test", "--tau", "0.5", "--lags", "4", str(data)]) == 0
    row = rows_of(capsys.readouterr().out)[0]
    assert row["df"] == "5" and 0 < float(row["p_value"]) <= 1


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["fit", "--bogus"]) == 2
    assert main(["fit"]) == 2
    assert main([]) == 2
    conf = tmp_path / "bad.conf"
    conf.write_text("nonsense = 1\n")
    assert main(["critval", "--config", str(conf)]) == 2
    assert main(["simulate-size", "--method", "bootstrap"]) == 2


def test_runtime_errors_exit_1(tmp_path, capsys):
    assert main(["fit", str(tmp_path / "missing.csv")]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("y,x\n1,2\n3,oops\n4,5\n")
    assert main(["fit", str(bad)]) == 1
    assert "row 2" in capsys.readouterr().err
    assert main(["simulate-size", "--reps", "0"]) == 1


def test_help(capsys):
    for cmd in ("fit", "empirical", "simulate-size", "simulate-power", "critval", "dq-test"):
        assert main([cmd, "--help"]) == 0
    assert "usage" in capsys.readouterr().out
