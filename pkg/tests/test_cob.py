import math
import warnings

import numpy as np
import pytest
from scipy import optimize, stats

from robustgp import gp
from robustgp.cob import (
    ConvergenceWarning,
    cob_predict,
    fit_cob,
    rl1_objective,
    bias_scores,
    robust_lambda,
    soft_threshold,
    solve_delta_subproblem,
    sure_threshold,
    update_lambda_cob,
)
from robustgp.config import FitConfig
from robustgp.kernels import KernelFamily, KernelSpec, kernel_matrix
from robustgp.plain import fit_plain
from robustgp.simulation import mse, toy_outlier_dataset

from conftest import random_spd
from oracles import dense_predict, kkt_violation, rl1_terms, subgradient_lasso

SE = KernelFamily.SQUARED_EXPONENTIAL


def small_problem(rng, n=3):
    X = rng.normal(size=(n, 1))
    y = rng.normal(size=n)
    return gp.Dataset(X, y), KernelSpec(SE, 1.1, 0.8)


def test_rl1_without_bias_is_plain_nll(rng):
    train, spec = small_problem(rng, 6)
    K = kernel_matrix(spec, train.X) + 0.3 * np.eye(6)
    assert rl1_objective(train, spec, 0.3, np.zeros(6), 17.0) == gp.gauss_nll(train.y, K)


def test_rl1_unpenalized_full_bias_leaves_log_determinant(rng):
    train, spec = small_problem(rng, 5)
    K = kernel_matrix(spec, train.X) + 0.3 * np.eye(5)
    expected = 2.5 * math.log(2 * math.pi) + 0.5 * np.linalg.slogdet(K)[1]
    assert rl1_objective(train, spec, 0.3, train.y, 0.0) == pytest.approx(expected, abs=1e-12)


def test_rl1_matches_term_by_term(rng):
    for _ in range(10):
        train, spec = small_problem(rng)
        delta = rng.normal(size=3)
        value = rl1_objective(train, spec, 0.2, delta, 0.7)
        assert abs(value - rl1_terms(spec, train.X, train.y, 0.2, delta, 0.7)) < 1e-12


def test_soft_threshold():
    np.testing.assert_array_equal(soft_threshold(np.array([3.0, 0.5, -3.0]), 1.0), [2.0, 0.0, -2.0])


def test_huge_penalty_gives_zero_bias(rng):
    factor = gp.cholesky(random_spd(rng, 6))
    delta = solve_delta_subproblem(factor, rng.normal(size=6) * 10, 1e12)
    np.testing.assert_array_equal(delta, np.zeros(6))


def test_identity_metric_is_soft_thresholding():
    delta = solve_delta_subproblem(gp.cholesky(np.eye(3)), np.array([3.0, 0.5, -3.0]), 1.0)
    np.testing.assert_allclose(delta, [2.0, 0.0, -2.0], atol=1e-12)


def test_matches_subgradient_oracle(rng):
    K = random_spd(rng, 4, ridge=1.0)
    K /= np.linalg.eigvalsh(K)[-1] / 2.0
    y = 2.0 * rng.normal(size=4)
    Q = np.linalg.inv(K)
    delta = solve_delta_subproblem(gp.cholesky(K), y, 0.7)
    oracle = subgradient_lasso(Q, y, 0.7, iters=1_000_000)
    np.testing.assert_allclose(delta, oracle, atol=1e-4)


def test_subproblem_satisfies_kkt(rng):
    for _ in range(30):
        n = int(rng.integers(2, 12))
        K = random_spd(rng, n)
        y = rng.normal(size=n) * rng.uniform(0.5, 5)
        lam = rng.uniform(0.05, 2)
        delta = solve_delta_subproblem(gp.cholesky(K), y, lam)
        assert kkt_violation(np.linalg.inv(K), y, delta, lam) < 1e-5


def test_sweep_cap_warns(rng):
    K = random_spd(rng, 8, ridge=1e-3)
    y = rng.normal(size=8) * 10
    with pytest.warns(ConvergenceWarning):
        solve_delta_subproblem(gp.cholesky(K), y, 1e-3, max_sweeps=1)


def test_scaled_response_solves_scaled_objective(rng):
    K = random_spd(rng, 4, ridge=1.0)
    K /= np.linalg.eigvalsh(K)[-1] / 2.0
    y = rng.normal(size=4)
    for c in (0.5, 3.0):
        delta = solve_delta_subproblem(gp.cholesky(K), c * y, 0.4, c * np.ones(4))
        oracle = subgradient_lasso(np.linalg.inv(K), c * y, 0.4, iters=200_000)
        np.testing.assert_allclose(delta, oracle, atol=1e-3)


def test_l1_solution_is_laplace_map():
    # joint density p(y, d) = N(y; d, K) * prod Laplace(d_i; lam), maximized on a grid
    K = np.array([[0.5, 0.2], [0.2, 0.4]])
    y = np.array([2.0, -0.3])
    lam = 1.5
    grid = np.round(np.arange(-3.0, 3.0 + 1e-9, 0.01), 10)
    D1, D2 = np.meshgrid(grid, grid, indexing="ij")
    R = np.stack([y[0] - D1, y[1] - D2], axis=-1)
    logp = stats.multivariate_normal(np.zeros(2), K).logpdf(R)
    logp += 2 * np.log(lam / 2) - lam * (np.abs(D1) + np.abs(D2))
    i, j = np.unravel_index(np.argmax(logp), logp.shape)
    delta = solve_delta_subproblem(gp.cholesky(K), y, lam)
    np.testing.assert_allclose(delta, [grid[i], grid[j]], atol=1e-2)


def test_lambda_update_is_stationary_point():
    delta = np.array([1.0, -0.5, 0.5, 0.0])
    lam = update_lambda_cob(delta, 4)
    res = optimize.minimize_scalar(lambda t: t * 2.0 - 4 * math.log(t / 2), bounds=(1e-3, 100), method="bounded", options={"xatol": 1e-10})
    assert lam == pytest.approx(res.x, abs=1e-6)
    assert lam == 2.0


def test_lambda_update_clamps_and_ratio():
    assert update_lambda_cob(np.zeros(5), 5, (1e-4, 1e6)) == 1e6
    assert update_lambda_cob(np.array([2.0, -1.0, 0.0]), 3) == 1.0
    with pytest.raises(ValueError):
        update_lambda_cob(np.ones(3), 3, (1.0, 0.5))


def test_robust_lambda_scale():
    # identity metric and unit-variance residuals: z robust standard deviations
    r = stats.norm.ppf(np.linspace(0.01, 0.99, 99))
    lam = robust_lambda(np.eye(99), r, z=2.0)
    assert lam == pytest.approx(2.0, rel=0.05)
    assert robust_lambda(np.eye(99), 3.0 * r, z=2.0) == pytest.approx(6.0, rel=0.05)


def test_bias_scores_add_back_own_bias(rng):
    K = random_spd(rng, 6)
    Q = np.linalg.inv(K)
    y, delta = rng.normal(size=6), rng.normal(size=6)
    u, _, _ = bias_scores(Q, y - delta, delta)
    v = Q @ (y - delta) + np.diag(Q) * delta
    np.testing.assert_allclose(u, v / np.sqrt(np.diag(Q)), atol=1e-12)


def test_bias_scores_ignore_a_common_offset():
    r = stats.norm.ppf(np.linspace(0.01, 0.99, 99))
    _, center, spread = bias_scores(np.eye(99), r + 0.7)
    assert center == pytest.approx(0.7)
    assert spread == pytest.approx(1.0, rel=0.05)


def test_sure_threshold_is_universal_on_pure_noise(rng):
    w = rng.normal(size=400)
    assert sure_threshold(w) == pytest.approx(np.sqrt(2 * np.log(400)))


def test_sure_threshold_minimizes_risk_under_contamination(rng):
    w = rng.normal(size=300)
    w[:30] += 6.0
    t = sure_threshold(w)
    assert 0.5 < t < np.sqrt(2 * np.log(300))

    def risk(s):
        return 300 - 2 * np.sum(np.abs(w) <= s) + np.sum(np.minimum(w**2, s * s))

    grid = np.abs(w)[np.abs(w) <= np.sqrt(2 * np.log(300))]
    assert risk(t) == pytest.approx(min(risk(s) for s in grid))


def sine_data(rng, n=100, noise=0.1):
    X = np.sort(rng.uniform(-3, 3, size=n))[:, None]
    y = np.sin(1.5 * X[:, 0]) + noise * rng.normal(size=n)
    return gp.Dataset(X, y)


@pytest.fixture(scope="module")
def clean_fit():
    rng = np.random.default_rng(7)
    train = sine_data(rng)
    test = sine_data(rng, 300)
    return train, test, fit_cob(train)


def test_clean_data_keeps_biases_small(clean_fit):
    train, test, fit = clean_fit
    assert np.max(np.abs(fit.delta)) < 3 * math.sqrt(fit.sigma2)
    plain = fit_plain(train)
    a = mse(test.y, fit.predict(test.X).mean)
    b = mse(test.y, plain.predict(test.X).mean)
    assert abs(a - b) < 0.05 * b


def test_trace_is_monotone(clean_fit):
    trace = np.array(clean_fit[2].objective_trace)
    assert np.all(np.diff(trace) <= 1e-9 * np.maximum(1.0, np.abs(trace[:-1])))


def test_fit_satisfies_kkt(clean_fit):
    train, _, fit = clean_fit
    K = kernel_matrix(fit.spec, train.X) + fit.sigma2 * np.eye(train.n)
    v = np.linalg.solve(K, train.y - fit.delta)
    zero = fit.delta == 0
    assert np.all(np.abs(v[zero]) <= fit.lam * (1 + 1e-6))
    assert np.all(np.abs(v[~zero] - fit.lam * np.sign(fit.delta[~zero])) < 1e-5)


def test_fit_with_outliers(rng):
    train = sine_data(rng, 120)
    y = train.y.copy()
    idx = np.array([10, 50, 90])
    y[idx] += 3.0
    fit = fit_cob(gp.Dataset(train.X, y))
    assert set(np.flatnonzero(np.abs(fit.delta) > 0.5)) == set(idx)
    trace = np.array(fit.objective_trace)
    assert np.all(np.diff(trace) <= 1e-9 * np.maximum(1.0, np.abs(trace[:-1])))
    assert fit.lam > 0 and fit.sigma2 > 0


def test_fit_is_deterministic(rng):
    train = sine_data(rng, 60)
    a, b = fit_cob(train), fit_cob(train)
    assert a.objective_trace == b.objective_trace
    assert np.array_equal(a.delta, b.delta)


def test_constant_response_gives_zero_bias():
    X = np.linspace(0, 1, 12)[:, None]
    fit = fit_cob(gp.Dataset(X, np.full(12, 2.0)))
    # the zero-mean prior leaves tiny edge residuals, so only a negligible bias is allowed
    assert np.max(np.abs(fit.delta)) < 1e-3


def test_too_few_points():
    with pytest.raises(ValueError):
        fit_cob(gp.Dataset(np.arange(4.0)[:, None], np.zeros(4)))


def test_laplace_rule_runs(rng):
    train = sine_data(rng, 40)
    fit = fit_cob(train, FitConfig(lambda_rule="laplace"))
    assert fit.lam > 0


def test_predict_without_bias_is_plain_gp(clean_fit, rng):
    train, _, fit = clean_fit
    zeroed = type(fit)(**{**fit.__dict__, "delta": np.zeros(train.n)})
    Xs = rng.uniform(-3, 3, size=(20, 1))
    a = cob_predict(zeroed, train, Xs)
    b = gp.predict(train, fit.spec, np.full(train.n, fit.sigma2), train.y, Xs)
    np.testing.assert_allclose(a.mean, b.mean, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a.variance, b.variance, rtol=0, atol=1e-12)


def test_predict_matches_dense_oracle(rng):
    train = sine_data(rng, 5)
    fit = fit_cob(train, FitConfig(max_outer=3))
    Xs = rng.uniform(-3, 3, size=(4, 1))
    pred = cob_predict(fit, train, Xs)
    m, v = dense_predict(fit.spec, train.X, np.full(5, fit.sigma2), train.y - fit.delta, Xs)
    np.testing.assert_allclose(pred.mean, m, atol=1e-8)
    np.testing.assert_allclose(pred.variance, v, atol=1e-8)


def test_prediction_is_not_pulled_toward_outliers():
    train, index = toy_outlier_dataset(seed=0)
    fit = fit_cob(train, FitConfig(kernel="exp"))
    x = train.X[index]
    trend = 0.5 * np.sin(2.0 * x[:, 0])
    assert np.all(np.abs(fit.predict(x).mean - trend) < 3 * math.sqrt(fit.sigma2))
