"""Random bias model.

Each bias is Gaussian with a shared mean ``mu`` and its own variance, so
observation ``i`` has effective noise variance ``tau2_i = tau_i^2 + sigma^2``
and the responses follow ``N(mu 1, diag(tau2) + C_xx)``. The regularized
objective adds ``lambda1 mu^2`` and an inverse-gamma penalty
``lambda2 log tau2_i + lambda3 / tau2_i`` per point.
"""
import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from . import gp
from .config import FitConfig
from .kernels import KernelSpec, distance_cache, kernel_matrix
from ._fitting import data_scale, initial_hyperparameters, kernel_bounds, minimize_box, noise_bounds

logger = logging.getLogger(__name__)

MIN_POINTS = 5


@dataclass(frozen=True)
class RabFit:
    """Fitted random bias model; ``tau_tilde_sq`` are the per-point noise variances."""

    mu: float
    tau_tilde_sq: np.ndarray
    spec: KernelSpec
    lambdas: tuple
    train: gp.Dataset
    objective_trace: tuple = ()
    converged: bool = False
    n_outer: int = 0
    fit_seconds: float = 0.0
    warnings: tuple = ()

    kind = "rab"

    @property
    def noise_diag(self):
        return self.tau_tilde_sq

    @property
    def residual(self):
        return self.train.y - self.mu

    @property
    def observation_noise(self):
        # inlier proxy: the median is insensitive to the inflated outlier entries
        return float(np.median(self.tau_tilde_sq))

    def predict(self, Xstar):
        return rab_predict(self, self.train, Xstar)


def _check_lambdas(lambdas):
    l1, l2, l3 = (float(v) for v in lambdas)
    if not (l1 > 0 and l2 > 1 and l3 > 0):
        raise ValueError(f"need lambda1 > 0, lambda2 > 1, lambda3 > 0; got {lambdas}")
    return l1, l2, l3


def variance_penalty(log_tau2, lambdas):
    _, l2, l3 = _check_lambdas(lambdas)
    log_tau2 = np.asarray(log_tau2, dtype=float)
    return float(np.sum(l2 * log_tau2 + l3 * np.exp(-log_tau2)))


def rl2_objective(train, spec, mu, log_tau2, lambdas):
    """Regularized negative log likelihood of the random bias model."""
    l1, _, _ = _check_lambdas(lambdas)
    log_tau2 = np.asarray(log_tau2, dtype=float)
    K = kernel_matrix(spec, train.X)
    K[np.diag_indices_from(K)] += np.exp(log_tau2)
    nll = gp.gauss_nll(train.y - mu, K)
    return nll + l1 * mu**2 + variance_penalty(log_tau2, lambdas)


def prior_normalizer(lambdas, n):
    """Terms of the joint density that depend only on the tuning parameters.

    The inverse-gamma normalization is counted once per data point.
    """
    l1, l2, l3 = _check_lambdas(lambdas)
    return -0.5 * np.log(l1) + n * (-(l2 - 1.0) * np.log(l3) + special.gammaln(l2 - 1.0))


def joint_objective(train, spec, mu, log_tau2, lambdas):
    return rl2_objective(train, spec, mu, log_tau2, lambdas) + prior_normalizer(
        lambdas, train.n
    )


def rl2_and_grad(X, y, family, params, lambdas, cache=None, ard=False):
    """Objective and gradient over ``(log s2, log ell..., log tau2_1..N, mu)``.

    The number of lengthscales is whatever remains after the ``N + 1``
    noise and offset entries.
    """
    l1, l2, l3 = lambdas
    n = y.shape[0]
    k = len(params) - n - 1
    spec = KernelSpec.from_log_params(family, params[:k], ard)
    log_tau2 = params[k:-1]
    mu = params[-1]
    nll, grad, alpha = gp.nll_and_grad(
        X, spec, np.exp(log_tau2), y - mu, per_point_noise=True, cache=cache
    )
    inv_tau2 = np.exp(-log_tau2)
    value = nll + l1 * mu**2 + float(np.sum(l2 * log_tau2 + l3 * inv_tau2))
    grad[k:] += l2 - l3 * inv_tau2
    g_mu = -float(np.sum(alpha)) + 2.0 * l1 * mu
    return value, np.append(grad, g_mu)


def _solve_shape(target, lo, hi):
    """Solve ``digamma(a) - log(a) = target`` for ``a`` in ``[lo, hi]``.

    The left side increases monotonically from -inf to 0. Returns the root
    and whether it had to be clamped to a bound.
    """

    def h(a):
        return special.digamma(a) - np.log(a) - target

    h_lo, h_hi = h(lo), h(hi)
    if h_lo >= 0:
        return lo, True
    if h_hi <= 0:
        return hi, True
    return optimize.brentq(h, lo, hi, xtol=1e-12, rtol=1e-12), False


def _solve_shape_given_scale(log_l3, mean_log, lo, hi):
    """Solve ``digamma(a) = log(lambda3) - mean(log tau2)``, increasing in ``a``."""
    target = log_l3 - mean_log

    def h(a):
        return special.digamma(a) - target

    if h(lo) >= 0:
        return lo, True
    if h(hi) <= 0:
        return hi, True
    return optimize.brentq(h, lo, hi, xtol=1e-12, rtol=1e-12), False


def update_lambdas_rab(
    mu,
    log_tau2,
    lambda1_bounds=(1e-6, 1e6),
    lambda2_bounds=(1.0 + 1e-3, 1e3),
    lambda3_bounds=(1e-6, 1e6),
    max_rounds=50,
):
    """Tuning parameters minimizing the joint negative log density.

    ``lambda1 = 1 / (2 mu^2)``; ``(lambda2, lambda3)`` is the joint
    stationary point of the inverse-gamma normalization,
    ``lambda3 = N (lambda2 - 1) / sum(1 / tau2)`` and
    ``digamma(lambda2 - 1) = log(lambda3) - mean(log tau2)``.

    Returns
    -------
    lambdas : tuple of float
    clamped : bool
        True when a bound was active for ``lambda2`` or ``lambda3``.
    """
    log_tau2 = np.asarray(log_tau2, dtype=float)
    n = log_tau2.shape[0]
    l1 = float(np.clip(1.0 / (2.0 * mu**2), *lambda1_bounds)) if mu != 0 else lambda1_bounds[1]

    inv_sum = float(np.sum(np.exp(-log_tau2)))
    mean_log = float(np.mean(log_tau2))
    a_lo, a_hi = lambda2_bounds[0] - 1.0, lambda2_bounds[1] - 1.0

    # profile out lambda3: digamma(a) - log(a) = log(N / inv_sum) - mean_log
    a, clamped = _solve_shape(np.log(n / inv_sum) - mean_log, a_lo, a_hi)
    l3 = n * a / inv_sum
    if not lambda3_bounds[0] <= l3 <= lambda3_bounds[1]:
        clamped = True
        for _ in range(max_rounds):
            l3 = float(np.clip(n * a / inv_sum, *lambda3_bounds))
            a_new, _ = _solve_shape_given_scale(np.log(l3), mean_log, a_lo, a_hi)
            if abs(a_new - a) <= 1e-8 * max(1.0, a):
                a = a_new
                break
            a = a_new
        l3 = float(np.clip(n * a / inv_sum, *lambda3_bounds))
    return (l1, 1.0 + a, float(l3)), clamped


def loo_residuals(factor, residual):
    """Leave-one-out residuals ``[K^-1 r]_i / [K^-1]_ii`` of a Gaussian fit."""
    Q = factor.inverse()
    return (Q @ residual) / np.diag(Q)


def fit_variance_prior(residuals, lambda2_bounds=(1.0 + 1e-3, 1e3), lambda3_bounds=(1e-6, 1e6)):
    """Inverse-gamma penalty weights by maximum marginal likelihood.

    If ``r_i ~ N(0, t_i)`` with ``t_i`` inverse-gamma of shape ``a`` and
    scale ``b``, then ``r_i`` is Student-t with ``2a`` degrees of freedom and
    squared scale ``b / a``. The penalty ``lambda2 log t + lambda3 / t`` is
    that prior's negative log density, so ``lambda2 = a + 1`` and
    ``lambda3 = b``. Homoscedastic residuals drive ``a`` to its upper bound.

    Returns
    -------
    (lambda2, lambda3) : tuple of float
    clamped : bool
        True when either estimate sits on a bound.
    """
    r2 = np.square(np.asarray(residuals, dtype=float))
    n = r2.shape[0]
    a_bounds = (np.log(lambda2_bounds[0] - 1.0), np.log(lambda2_bounds[1] - 1.0))
    b_bounds = (np.log(lambda3_bounds[0]), np.log(lambda3_bounds[1]))

    def negloglik(p):
        a, b = np.exp(p)
        u = r2 / (2.0 * b)
        log1p = np.log1p(u)
        value = -n * (special.gammaln(a + 0.5) - special.gammaln(a) - 0.5 * np.log(2.0 * np.pi * b))
        value += (a + 0.5) * float(np.sum(log1p))
        g_a = -n * (special.digamma(a + 0.5) - special.digamma(a)) + float(np.sum(log1p))
        g_b = n / (2.0 * b) - (a + 0.5) * float(np.sum(u / (1.0 + u))) / b
        return value, np.array([a * g_a, b * g_b])

    # start from a moderately heavy tail at the robust residual scale
    spread = float(np.median(r2)) / 0.4549364231195724
    x0 = np.array([np.log(2.0), np.log(2.0 * max(spread, 1e-300))])
    bounds = [a_bounds, b_bounds]
    x, _ = minimize_box(negloglik, x0, bounds, maxiter=200)
    clamped = any(np.isclose(x[i], bounds[i][j], rtol=0, atol=1e-6)
                  for i in range(2) for j in range(2))
    return (1.0 + float(np.exp(x[0])), float(np.exp(x[1]))), clamped


def fit_rab(train, config=None):
    """Fit the random bias model by alternating quasi-Newton and tuning steps.

    Each outer iteration takes at most ``config.max_inner`` L-BFGS-B steps on
    ``(mu, log s2, log ell, log tau2)`` against the regularized likelihood.
    During the tuning phase every such block is followed by a re-estimate of
    ``(lambda1, lambda2, lambda3)`` using ``config.rab_rule``: ``"marginal"``
    fits the variance penalty to leave-one-out residuals
    (:func:`fit_variance_prior`), ``"joint"`` takes the stationary point of
    the joint density (:func:`update_lambdas_rab`). Once the tuning
    parameters settle they are held fixed and iteration stops when the
    relative objective change drops below ``config.tol``; ``objective_trace``
    records that phase and is non-increasing.
    """
    config = config or FitConfig(model="rab")
    if train.n < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} points to fit, got {train.n}")
    start = time.perf_counter()
    X, y, n = train.X, train.y, train.n
    family = config.kernel

    ard = config.ard
    theta0, v = initial_hyperparameters(train, ard)
    k = len(theta0)
    params = np.concatenate([theta0, np.full(n, np.log(0.1 * v)), [0.0]])
    scale = np.sqrt(data_scale(y))
    bounds = (
        kernel_bounds(train, ard)
        + [noise_bounds(train)] * n
        + [(float(np.min(y)) - scale, float(np.max(y)) + scale)]
    )
    lambdas = _check_lambdas(config.lambdas_init)
    cache = distance_cache(X, ard)

    def objective(p):
        return rl2_and_grad(X, y, family, p, lambdas, cache, ard)

    def joint(value):
        return value + prior_normalizer(lambdas, n)

    def block():
        nonlocal params
        params, value = minimize_box(objective, params, bounds, config.max_inner)
        if not np.isfinite(value):
            raise FloatingPointError("non-finite objective after the hyperparameter block")
        return value

    def retune():
        mu, log_tau2 = params[-1], params[k:-1]
        if config.rab_rule == "joint":
            return update_lambdas_rab(
                mu, log_tau2, config.lambda1_bounds, config.lambda2_bounds, config.lambda3_bounds
            )
        spec = KernelSpec.from_log_params(family, params[:k], ard)
        factor = gp.training_factor(X, spec, np.exp(log_tau2))
        l1 = float(np.clip(1.0 / (2.0 * mu**2), *config.lambda1_bounds)) if mu != 0 \
            else config.lambda1_bounds[1]
        (l2, l3), clamped = fit_variance_prior(
            loo_residuals(factor, y - mu), config.lambda2_bounds, config.lambda3_bounds
        )
        return (l1, l2, l3), clamped

    issues = []
    for rnd in range(1, config.max_tuning_rounds + 1):
        block()
        new, clamped = retune()
        if clamped:
            issues.append(f"tuning round {rnd}: tuning parameter clamped to a bound")
        change = max(abs(a - b) / b for a, b in zip(new, lambdas))
        lambdas = new
        logger.debug("rab tuning %d: lambdas %s", rnd, lambdas)
        if change <= config.tuning_tol:
            break

    value, _ = objective(params)
    trace = [joint(value)]
    converged = False
    outer = 0
    for outer in range(1, config.max_outer + 1):
        trace.append(joint(block()))
        logger.debug("rab outer %d: objective %.10g", outer, trace[-1])
        if abs(trace[-2] - trace[-1]) / max(1.0, abs(trace[-2])) < config.tol:
            converged = True
            break

    return RabFit(
        mu=float(params[-1]),
        tau_tilde_sq=np.exp(params[k:-1]),
        spec=KernelSpec.from_log_params(family, params[:k], ard),
        lambdas=tuple(float(v) for v in lambdas),
        train=train,
        objective_trace=tuple(trace),
        converged=converged,
        n_outer=outer,
        fit_seconds=time.perf_counter() - start,
        warnings=tuple(issues),
    )


def rab_predict(fit, train, Xstar):
    """Latent posterior at ``Xstar`` under heteroscedastic noise ``tau_tilde_sq``.

    ``mu`` is not added back: test points are modeled as unbiased.
    """
    return gp.predict(train, fit.spec, fit.tau_tilde_sq, train.y - fit.mu, Xstar)
