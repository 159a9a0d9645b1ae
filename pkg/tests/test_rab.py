import numpy as np
import pytest
from scipy import special

from robustgp import gp
from robustgp.config import FitConfig
from robustgp.kernels import KernelSpec, distance_cache
from robustgp.rab import (
    RabFit,
    fit_rab,
    prior_normalizer,
    rab_predict,
    rl2_and_grad,
    rl2_objective,
    update_lambdas_rab,
)
from robustgp.simulation import ScenarioSpec, generate_scenario

from conftest import central_difference
from oracles import dense_predict, rl2_terms

SE = "se"


def _instance(rng, n=3, d=1):
    X = rng.normal(size=(n, d))
    y = rng.normal(size=n)
    spec = KernelSpec(SE, rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0))
    return gp.Dataset(X, y), spec


def test_zero_mean_adds_no_mean_penalty(rng):
    train, spec = _instance(rng)
    log_tau2 = rng.normal(size=3)
    a = rl2_objective(train, spec, 0.0, log_tau2, (1.0, 2.0, 1.0))
    b = rl2_objective(train, spec, 0.0, log_tau2, (50.0, 2.0, 1.0))
    assert a == b


def test_unit_variances_reduce_penalty_to_n_lambda3(rng):
    train, spec = _instance(rng, n=4)
    lambdas = (1.0, 3.0, 0.7)
    value = rl2_objective(train, spec, 0.0, np.zeros(4), lambdas)
    K = np.eye(4) + gp.kernel_matrix(spec, train.X)
    assert value == pytest.approx(gp.gauss_nll(train.y, K) + 4 * 0.7, abs=1e-12)


def test_objective_matches_dense_oracle(rng):
    for _ in range(20):
        train, spec = _instance(rng, n=3, d=2)
        mu, log_tau2 = rng.normal(), rng.normal(size=3)
        lambdas = (rng.uniform(0.1, 3), rng.uniform(1.1, 4), rng.uniform(0.1, 3))
        expected = rl2_terms(spec, train.X, train.y, mu, log_tau2, lambdas)
        assert rl2_objective(train, spec, mu, log_tau2, lambdas) == pytest.approx(
            expected, abs=1e-12
        )


@pytest.mark.parametrize("family", ["se", "exp"])
@pytest.mark.parametrize("ard", [False, True])
def test_gradient_matches_finite_differences(family, ard, rng):
    n, d = 8, 2
    X = rng.normal(size=(n, d))
    y = rng.normal(size=n)
    lambdas = (0.8, 2.5, 0.3)
    k = 1 + (d if ard else 1)
    params = np.concatenate([rng.normal(0, 0.3, size=k), rng.normal(-1, 0.3, size=n), [0.4]])
    cache = distance_cache(X, ard)

    def value(p):
        return rl2_and_grad(X, y, family, p, lambdas, cache, ard)[0]

    _, grad = rl2_and_grad(X, y, family, params, lambdas, cache, ard)
    fd = central_difference(value, params)
    np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-7)
    spec = KernelSpec.from_log_params(family, params[:k], ard)
    train = gp.Dataset(X, y)
    assert value(params) == pytest.approx(
        rl2_objective(train, spec, params[-1], params[k:-1], lambdas), abs=1e-10
    )


def _joint_in_lambdas(lambdas, mu, log_tau2):
    """Negative log density terms that involve the tuning parameters."""
    l1, l2, l3 = lambdas
    n = len(log_tau2)
    return (
        l1 * mu**2
        - 0.5 * np.log(l1)
        + np.sum(l2 * log_tau2 + l3 * np.exp(-log_tau2))
        - n * (l2 - 1) * np.log(l3)
        + n * special.gammaln(l2 - 1)
    )


def test_prior_normalizer_matches_formula():
    lambdas = (0.5, 3.0, 2.0)
    expected = -0.5 * np.log(0.5) + 7 * (-2.0 * np.log(2.0) + special.gammaln(2.0))
    assert prior_normalizer(lambdas, 7) == pytest.approx(expected, abs=1e-14)


def test_zero_mean_sends_lambda1_to_upper_bound():
    (l1, _, _), _ = update_lambdas_rab(0.0, np.log([0.1, 0.2, 0.5]), lambda1_bounds=(1e-6, 1e6))
    assert l1 == 1e6


def test_lambda1_closed_form():
    (l1, _, _), _ = update_lambdas_rab(0.5, np.log([0.1, 0.2, 0.5]))
    assert l1 == pytest.approx(2.0)


def test_constant_variances_push_shape_to_its_bound():
    # digamma(a) < log(a) for every a > 0, so no interior stationary point exists
    t, n = 0.3, 6
    (_, l2, l3), clamped = update_lambdas_rab(0.1, np.full(n, np.log(t)))
    assert clamped
    assert l2 == pytest.approx(1e3)
    # the scale equation still holds exactly at the clamped shape
    assert l3 == pytest.approx(n * (l2 - 1) / (n / t), rel=1e-12)
    # and the objective keeps decreasing toward the bound
    log_tau2 = np.full(n, np.log(t))
    here = _joint_in_lambdas((1.0, l2, l3), 0.1, log_tau2)
    inside = _joint_in_lambdas((1.0, 0.9 * l2, (0.9 * l2 - 1) * t), 0.1, log_tau2)
    assert here < inside


def test_tuning_update_is_a_local_minimum(rng):
    for _ in range(10):
        mu = rng.normal()
        log_tau2 = np.log(rng.gamma(2.0, 0.2, size=30))
        (l1, l2, l3), clamped = update_lambdas_rab(mu, log_tau2)
        assert not clamped
        # both stationarity equations
        assert l3 == pytest.approx(30 * (l2 - 1) / np.sum(np.exp(-log_tau2)), rel=1e-10)
        assert special.digamma(l2 - 1) == pytest.approx(np.log(l3) - np.mean(log_tau2), abs=1e-8)
        best = _joint_in_lambdas((l1, l2, l3), mu, log_tau2)
        for k in range(3):
            for factor in (0.99, 1.01):
                trial = [l1, l2, l3]
                trial[k] *= factor
                assert _joint_in_lambdas(trial, mu, log_tau2) >= best - 1e-12


def test_equal_variances_and_zero_mean_match_plain_prediction(rng):
    train, spec = _instance(rng, n=6, d=2)
    Xs = rng.normal(size=(4, 2))
    fit = RabFit(0.0, np.full(6, 0.2), spec, (1.0, 2.0, 1.0), train)
    a = rab_predict(fit, train, Xs)
    b = gp.predict(train, spec, 0.2, train.y, Xs)
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-12)
    np.testing.assert_allclose(a.variance, b.variance, atol=1e-12)


def test_huge_variance_point_is_effectively_removed(rng):
    X = np.linspace(-2, 2, 12)[:, None]
    y = np.sin(X[:, 0]) + 0.05 * rng.normal(size=12)
    y[5] += 4.0
    spec = KernelSpec(SE, 1.0, 0.8)
    tau = np.full(12, 0.01)
    tau[5] = 1e6
    Xs = np.linspace(-2.5, 2.5, 40)[:, None]
    train = gp.Dataset(X, y)
    full = rab_predict(RabFit(0.0, tau, spec, (1.0, 2.0, 1.0), train), train, Xs)
    keep = np.arange(12) != 5
    loo = gp.predict(gp.Dataset(X[keep], y[keep]), spec, tau[keep], y[keep], Xs)
    assert np.max(np.abs(full.mean - loo.mean)) < 1e-3
    assert np.max(np.abs(full.variance - loo.variance)) < 1e-3


def test_prediction_matches_dense_oracle(rng):
    train, spec = _instance(rng, n=5, d=2)
    tau = rng.uniform(0.05, 1.0, size=5)
    fit = RabFit(0.3, tau, spec, (1.0, 2.0, 1.0), train)
    Xs = rng.normal(size=(3, 2))
    got = fit.predict(Xs)
    mean, var = dense_predict(spec, train.X, tau, train.y - 0.3, Xs)
    np.testing.assert_allclose(got.mean, mean, atol=1e-10)
    np.testing.assert_allclose(got.variance, var, atol=1e-10)


@pytest.fixture(scope="module")
def clean_fit():
    rng = np.random.default_rng(11)
    X = rng.uniform(-3, 3, size=(100, 1))
    y = np.sin(X[:, 0]) + 0.2 * rng.normal(size=100)
    train = gp.Dataset(X, y)
    return train, fit_rab(train, FitConfig(model="rab"))


def test_no_outliers_gives_nearly_common_variances(clean_fit):
    _, fit = clean_fit
    tau = fit.tau_tilde_sq
    assert np.std(tau, ddof=1) / np.median(tau) < 0.5


def test_trace_is_non_increasing(clean_fit):
    _, fit = clean_fit
    assert np.all(np.diff(fit.objective_trace) <= 1e-9)


def test_fit_is_deterministic(clean_fit):
    train, fit = clean_fit
    again = fit_rab(train, FitConfig(model="rab"))
    assert again.objective_trace == fit.objective_trace
    np.testing.assert_array_equal(again.tau_tilde_sq, fit.tau_tilde_sq)


def test_outliers_get_the_largest_variances():
    rng = np.random.default_rng(5)
    X = np.sort(rng.uniform(-3, 3, size=120))[:, None]
    y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=120)
    outliers = np.array([15, 60, 100])
    y[outliers] += 1.5
    fit = fit_rab(gp.Dataset(X, y), FitConfig(model="rab"))
    top = np.argsort(fit.tau_tilde_sq)[-3:]
    assert set(top) == set(outliers)


def test_largest_variances_recover_injected_outliers():
    # 6-sigma outliers at q = 0.1 over 15 replicates
    hits = []
    for seed in range(15):
        spec = ScenarioSpec(q=0.1, mu_o=3.0, sigma_ratio=6, n_train=100, n_test=1,
                            replicate_seed=seed)
        train, _, mask = generate_scenario(spec)
        fit = fit_rab(train, FitConfig(model="rab"))
        k = mask.sum()
        top = np.argsort(fit.tau_tilde_sq)[::-1][:k]
        hits.append(mask[top].sum() / k if k else 1.0)
    assert np.mean(hits) >= 0.8


def test_too_few_points_are_rejected():
    with pytest.raises(ValueError):
        fit_rab(gp.Dataset(np.arange(4.0)[:, None], np.arange(4.0)))
