import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import es_subsample_ols, intercept_only
from sninfer import dgp
from sninfer.data import TimeSeriesDataset
from sninfer.esr import default_epsilon, expanding_es_path, fit_es, psi_star
from sninfer.exceptions import ExceedanceShortfallError, RankDeficientError
from sninfer.qr import expanding_qr_path, fit_qr


def test_upper_tail_mean():
    fit = fit_es(intercept_only([1, 2, 3, 4]), 0.5, [2.5], "upper")
    assert fit.beta_hat[0] == pytest.approx(3.5)
    assert fit.n_exceed == 2


def test_lower_tail_mean():
    fit = fit_es(intercept_only([1, 2, 3, 4]), 0.5, [2.5], "lower")
    assert fit.beta_hat[0] == pytest.approx(1.5)


def test_matches_explicit_subsample_ols():
    data = dgp.generate(dgp.DgpConfig(n=200), seed=21)
    alpha = fit_qr(data, 0.9).alpha_hat
    fit = fit_es(data, 0.9, alpha)
    band = 1e-7 * (1 + np.max(np.abs(data.y)))
    beta, count = es_subsample_ols(data.x, data.y, alpha, band=band)
    np.testing.assert_allclose(fit.beta_hat, beta, atol=1e-10)
    assert fit.n_exceed == count >= data.k


def test_normal_equations_hold():
    data = dgp.generate(dgp.DgpConfig(n=300, rho=0.5), seed=2)
    for side, tau in (("upper", 0.8), ("lower", 0.2)):
        fit = fit_es(data, tau, side=side)
        r = data.y - data.x @ fit.alpha_hat
        mask = r > 1e-7 * (1 + np.max(np.abs(data.y))) if side == "upper" else \
            r <= 1e-7 * (1 + np.max(np.abs(data.y)))
        score = data.x[mask].T @ (data.y[mask] - data.x[mask] @ fit.beta_hat)
        np.testing.assert_allclose(score, 0, atol=1e-8)


def test_intercept_only_is_mean_strictly_above_quantile():
    y = np.random.default_rng(4).normal(size=101)
    fit = fit_es(intercept_only(y), 0.9)
    q = fit.alpha_hat[0]
    assert fit.beta_hat[0] == pytest.approx(y[y > q].mean(), abs=1e-12)
    assert fit.n_exceed == 10


def test_too_few_exceedances():
    with pytest.raises(ExceedanceShortfallError, match="need at least 1"):
        fit_es(intercept_only([1, 2, 3, 4]), 0.5, [4.0])


def test_exactly_identified_tail():
    X = np.column_stack([np.ones(5), [0, 1, 2, 3, 4.0]])
    data = TimeSeriesDataset([0, 5, 0, 9, 0.0], X)
    fit = fit_es(data, 0.5, [1.0, 0.0])
    np.testing.assert_allclose(fit.beta_hat, [3.0, 2.0], atol=1e-12)
    assert fit.n_exceed == 2


def test_rank_deficient_tail():
    X = np.column_stack([np.ones(6), [0, 0, 0, 1, 1, 1.0]])
    data = TimeSeriesDataset([0, 0, 0, 6, 7, 8.0], X)
    # only the x=1 rows lie above the line 0.5 + 5x
    with pytest.raises(RankDeficientError):
        fit_es(data, 0.5, [0.5, 5.0], "upper")


def test_path_last_entry_is_full_fit():
    data = dgp.generate(dgp.DgpConfig(n=200), seed=6)
    path = expanding_es_path(data, 0.9, 0.25)
    full = fit_es(data, 0.9, fit_qr(data, 0.9).alpha_hat)
    np.testing.assert_array_equal(path.full, full.beta_hat)
    assert path.kind == "es" and path.side == "upper"


def test_path_entries_use_window_quantile_fits():
    data = dgp.generate(dgp.DgpConfig(n=120, rho=0.9), seed=7)
    qpath = expanding_qr_path(data, 0.75, 0.25)
    path = expanding_es_path(data, 0.75, 0.25, qr_path=qpath)
    for j, alpha, beta in zip(path.windows[::7], qpath.coefficients[::7], path.coefficients[::7]):
        np.testing.assert_allclose(fit_es(data, 0.75, alpha, window=j).beta_hat, beta, atol=1e-9)


def test_shortfall_error_names_window_and_advice():
    data = dgp.generate(dgp.DgpConfig(n=100), seed=1)
    with pytest.raises(ExceedanceShortfallError, match=r"window \d+.*larger epsilon"):
        expanding_es_path(data, 0.99, 0.05)


def test_feasible_at_small_sample_setting():
    # n=100, tau=0.9, eps=0.3 should essentially never run short of tail points
    failures = 0
    for seed in range(200):
        data = dgp.generate(dgp.DgpConfig(n=100, rho=0.9), seed=seed)
        try:
            expanding_es_path(data, 0.9, 0.3)
        except ExceedanceShortfallError:
            failures += 1
    assert failures <= 2


def test_tails_partition_sample():
    data = dgp.generate(dgp.DgpConfig(n=150, rho=0.5), seed=9)
    alpha = fit_qr(data, 0.75).alpha_hat
    up = fit_es(data, 0.75, alpha, "upper")
    lo = fit_es(data, 0.75, alpha, "lower")
    assert up.n_exceed + lo.n_exceed == data.n


@pytest.mark.parametrize("tau", [0.9, 0.75])
def test_mirror_identity_off_ties(tau):
    # with no observation on the quantile line the two tails mirror exactly
    data = dgp.generate(dgp.DgpConfig(n=150, rho=0.5), seed=9)
    alpha = fit_qr(data, tau).alpha_hat + np.array([1e-3, 0.0])
    fu = fit_es(data, tau, alpha, "upper")
    fl = fit_es(data.mirrored(), 1 - tau, -alpha, "lower")
    np.testing.assert_allclose(fl.beta_hat, -fu.beta_hat, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_psi_star_mean_zero_at_full_fit(seed):
    data = dgp.generate(dgp.DgpConfig(n=200), seed=seed)
    fit = fit_es(data, 0.8)
    g = psi_star(data.y - data.x @ fit.alpha_hat, data.y - data.x @ fit.beta_hat,
                 scale=np.max(np.abs(data.y)))
    assert abs(g.mean()) <= 1e-10 + np.std(data.y) / np.sqrt(data.n)


def test_default_epsilon():
    assert default_epsilon("quantile") == 0.1
    assert default_epsilon("es", 500, 0.9) == 0.25
    assert default_epsilon("es", 100, 0.9) == 0.3
