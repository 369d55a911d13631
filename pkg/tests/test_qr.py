import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import intercept_only, qr_enumeration, qr_linprog, qr_objective
from sninfer import dgp
from sninfer.data import TimeSeriesDataset
from sninfer.exceptions import EstimationError, RankDeficientError
from sninfer.qr import expanding_qr_path, fit_qr, psi, subgradient_ok, tick_loss


@pytest.mark.parametrize("u,tau,expected", [(0, 0.5, 0.0), (-1, 0.25, 0.75), (2, 0.25, 0.5)])
def test_tick_loss_values(u, tau, expected):
    assert tick_loss(u, tau) == pytest.approx(expected)


@pytest.mark.parametrize("u,tau,expected", [(-3, 0.9, -0.1), (3, 0.9, 0.9), (0, 0.5, -0.5)])
def test_psi_values(u, tau, expected):
    assert psi(u, tau) == pytest.approx(expected)


@given(st.floats(-1e6, 1e6), st.floats(0.01, 0.99))
def test_tick_loss_nonnegative(u, tau):
    assert tick_loss(u, tau) >= 0


def test_median_of_three():
    fit = fit_qr(intercept_only([1, 2, 3]), 0.5)
    assert fit.alpha_hat[0] == pytest.approx(2)
    assert fit.objective == pytest.approx(1)


def test_upper_quartile_scan():
    y = np.array([1, 2, 3, 10.0])
    best = min(np.sum(tick_loss(y - a, 0.75)) for a in y)
    fit = fit_qr(intercept_only(y), 0.75)
    assert fit.objective == pytest.approx(best, abs=1e-8)


def test_dgp_sample_matches_basis_enumeration():
    data = dgp.generate(dgp.DgpConfig(n=20), seed=11)
    for tau in (0.25, 0.5, 0.9):
        best, _ = qr_enumeration(data.x, data.y, tau)
        assert fit_qr(data, tau).objective == pytest.approx(best, abs=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_matches_linear_program(seed):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(80), rng.normal(size=(80, 2))])
    y = X @ [1, -2, 0.5] + rng.standard_t(3, size=80)
    data = TimeSeriesDataset(y, X)
    for tau in (0.1, 0.5, 0.8):
        ref, _ = qr_linprog(X, y, tau)
        fit = fit_qr(data, tau)
        assert fit.objective == pytest.approx(ref, abs=1e-8)
        assert subgradient_ok(X, y, tau, fit.alpha_hat)


def test_objective_not_above_zero_vector():
    data = dgp.generate(dgp.DgpConfig(n=50), seed=3)
    fit = fit_qr(data, 0.7)
    assert fit.objective <= qr_objective(data.x, data.y, np.zeros(2), 0.7)


def test_errors():
    data = intercept_only([1.0, 2.0, 3.0])
    with pytest.raises(EstimationError):
        fit_qr(data, 0.5, window=1)
    X = np.column_stack([np.ones(10), np.ones(10)])
    with pytest.raises(RankDeficientError):
        fit_qr(TimeSeriesDataset(np.arange(10.0), X), 0.5)
    with pytest.raises(ValueError):
        fit_qr(data, 1.0)


def test_running_medians():
    path = expanding_qr_path(intercept_only(np.arange(1, 11.0)), 0.5, 0.5)
    assert path.j_start == 5
    np.testing.assert_allclose(path.coefficients[:, 0], [3, 3.5, 4, 4.5, 5, 5.5], atol=1e-6)


def test_path_last_entry_is_full_fit():
    data = dgp.generate(dgp.DgpConfig(n=150, rho=0.5), seed=4)
    path = expanding_qr_path(data, 0.75, 0.1)
    np.testing.assert_array_equal(path.full, fit_qr(data, 0.75).alpha_hat)


@pytest.mark.parametrize("tau", [0.5, 0.9])
def test_warm_path_matches_cold_refits(tau):
    data = dgp.generate(dgp.DgpConfig(n=100, rho=0.9), seed=8)
    warm = expanding_qr_path(data, tau, 0.1)
    for j, coef in zip(warm.windows, warm.coefficients):
        X, y = data.x[:j], data.y[:j]
        cold = fit_qr(data, tau, j)
        assert qr_objective(X, y, coef, tau) == pytest.approx(cold.objective, abs=1e-8)
        assert subgradient_ok(X, y, tau, coef)


def test_path_with_ties_matches_cold():
    # integer responses create many non-unique optima
    rng = np.random.default_rng(5)
    x = rng.integers(0, 3, size=60).astype(float)
    y = rng.integers(0, 4, size=60).astype(float)
    data = TimeSeriesDataset(y, np.column_stack([np.ones(60), x]))
    warm = expanding_qr_path(data, 0.5, 0.2)
    cold = expanding_qr_path(data, 0.5, 0.2, warm_start=False)
    for j, a, b in zip(warm.windows, warm.coefficients, cold.coefficients):
        assert qr_objective(data.x[:j], data.y[:j], a, 0.5) == pytest.approx(
            qr_objective(data.x[:j], data.y[:j], b, 0.5), abs=1e-8)


def test_path_errors_name_the_window():
    X = np.column_stack([np.ones(30), np.r_[np.zeros(10), np.arange(20.0)]])
    data = TimeSeriesDataset(np.arange(30.0), X)
    with pytest.raises(RankDeficientError, match="window 5"):
        expanding_qr_path(data, 0.5, 1 / 6)
    with pytest.raises(EstimationError, match="k\\+1"):
        expanding_qr_path(intercept_only(np.arange(10.0)), 0.5, 0.1)


def _random_instance(seed, n, k):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
    return TimeSeriesDataset(X @ rng.normal(size=k) + rng.normal(size=n), X)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 10.0), st.floats(0.1, 0.9))
def test_scale_equivariance(seed, c, tau):
    data = _random_instance(seed, 30, 2)
    scaled = TimeSeriesDataset(c * data.y, data.x)
    a, b = fit_qr(data, tau), fit_qr(scaled, tau)
    assert b.objective == pytest.approx(c * a.objective, rel=1e-8, abs=1e-8)
    assert qr_objective(scaled.x, scaled.y, c * a.alpha_hat, tau) == pytest.approx(b.objective, abs=1e-8 * (1 + c))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 0.9))
def test_regressor_equivariance(seed, tau):
    data = _random_instance(seed, 30, 3)
    M = np.random.default_rng(seed + 1).normal(size=(3, 3)) + 3 * np.eye(3)
    moved = TimeSeriesDataset(data.y, data.x @ M)
    assert fit_qr(moved, tau).objective == pytest.approx(fit_qr(data, tau).objective, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=40, unique=True), st.floats(0.05, 0.95))
def test_quantile_coherence(values, tau):
    y = np.array(values)
    a = fit_qr(intercept_only(y), tau).alpha_hat[0]
    r = y - a
    tol = 1e-7 * (1 + np.max(np.abs(y)))
    assert np.mean(r < -tol) <= tau + 1e-12
    assert np.mean(r <= tol) >= tau - 1e-12
