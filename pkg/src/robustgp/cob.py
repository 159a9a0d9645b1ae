"""Constant bias model.

Each observation carries an unknown fixed offset ``delta_i``. The offsets are
estimated under an L1 penalty, which is the MAP estimate under a Laplace
prior with rate ``lam``:

    NLL(y - delta | sigma2, theta) + lam * |delta|_1

is minimized by block coordinate descent over the kernel/noise block and
the bias block, with ``lam`` re-estimated between passes.
"""
import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import gp
from .config import FitConfig
from .kernels import KernelSpec, distance_cache, kernel_matrix
from ._fitting import initial_hyperparameters, kernel_bounds, minimize_box, noise_bounds

logger = logging.getLogger(__name__)

MIN_POINTS = 5
MAD_TO_SD = 0.6744897501960817


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CobFit:
    """Fitted constant bias model.

    ``objective_trace`` holds the regularized likelihood after each outer
    iteration at the final ``lam``; ``lambda_trace`` the tuning history.
    ``threshold_z`` is the score threshold behind ``lam`` under the robust
    rule and ``None`` under the Laplace rule.
    """

    delta: np.ndarray
    sigma2: float
    spec: KernelSpec
    lam: float
    train: gp.Dataset
    objective_trace: tuple = ()
    lambda_trace: tuple = ()
    converged: bool = False
    n_outer: int = 0
    fit_seconds: float = 0.0
    warnings: tuple = field(default=())
    threshold_z: float = None

    kind = "cob"

    @property
    def noise_diag(self):
        return np.full(self.train.n, self.sigma2)

    @property
    def residual(self):
        return self.train.y - self.delta

    @property
    def observation_noise(self):
        return self.sigma2

    def predict(self, Xstar):
        return cob_predict(self, self.train, Xstar)


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def rl1_objective(train, spec, sigma2, delta, lam):
    """L1-regularized negative log likelihood of the constant bias model."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    delta = np.asarray(delta, dtype=float)
    K = kernel_matrix(spec, train.X)
    K[np.diag_indices_from(K)] += sigma2
    return gp.gauss_nll(train.y - delta, K) + lam * float(np.sum(np.abs(delta)))


def laplace_normalizer(lam, n):
    """``-N log(lam / 2)``: the part of the joint density that depends on ``lam`` alone."""
    return -n * np.log(0.5 * lam)


def _lasso_value(Q, y, lam, d):
    r = y - d
    return 0.5 * float(r @ Q @ r) + lam * float(np.sum(np.abs(d)))


def _best_on_segment(Q, y, lam, delta, active, current, target):
    """Lowest-objective point on ``current -> target``, among zero crossings and the end."""
    step = target - current
    crossing = np.flatnonzero(current * target < 0)
    ts = np.append(-current[crossing] / step[crossing], 1.0)
    trial = delta.copy()
    best, best_value = current, _lasso_value(Q, y, lam, delta)
    for t, k in zip(ts, np.append(crossing, -1)):
        point = current + t * step
        if k >= 0:
            point[k] = 0.0
        trial[active] = point
        value = _lasso_value(Q, y, lam, trial)
        if value < best_value:
            best, best_value = point, value
    return best


def solve_delta_subproblem(factor, y, lam, delta_init=None, tol=1e-8, max_sweeps=500):
    """Minimize ``0.5 (y - d)' K^-1 (y - d) + lam |d|_1`` over ``d``.

    Cyclic coordinate descent with exact soft-threshold updates. After each
    full sweep the active coordinates are solved jointly with their signs
    held: on a fixed support ``A`` with signs ``s`` the optimality condition
    is linear, ``Q_AA d_A = (Q y)_A - lam s``. If that solution flips a sign,
    the step stops at the best point along the segment toward it, checking
    each zero crossing (feature-sign search), which still lowers the
    objective. The next full sweep then checks the zero coordinates, so the
    returned point satisfies the coordinatewise optimality conditions.

    Parameters
    ----------
    factor : CholFactor
        Cholesky factor of ``K = sigma2 I + C_xx``.
    y : ndarray, shape (N,)
    lam : float
    delta_init : ndarray, optional
        Warm start; zeros by default.

    Returns
    -------
    delta : ndarray, shape (N,)
        A :class:`ConvergenceWarning` is issued if ``max_sweeps`` is reached.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    Q = factor.inverse() if isinstance(factor, gp.CholFactor) else np.asarray(factor, float)
    q = np.diag(Q).copy()
    thresh = lam / q
    Qy = Q @ y
    delta = np.zeros(n) if delta_init is None else np.array(delta_init, dtype=float)
    # g = Q (y - delta) is kept in sync with every coordinate change
    g = Qy - Q @ delta

    def sweep(indices):
        biggest = 0.0
        for i in indices:
            old = delta[i]
            z = old + g[i] / q[i]
            if z > thresh[i]:
                new = z - thresh[i]
            elif z < -thresh[i]:
                new = z + thresh[i]
            else:
                new = 0.0
            if new != old:
                step = new - old
                g[:] -= Q[i] * step
                delta[i] = new
                biggest = max(biggest, abs(step))
        return biggest

    def refine():
        # exact minimizer on the current support, shrinking it on sign flips
        nonlocal g
        for _ in range(n + 1):
            active = np.flatnonzero(delta)
            if active.size == 0:
                break
            signs = np.sign(delta[active])
            try:
                joint = linalg.solve(Q[np.ix_(active, active)], Qy[active] - lam * signs,
                                     assume_a="pos")
            except (linalg.LinAlgError, ValueError):
                break
            current = delta[active]
            if np.all(np.sign(joint) == signs):
                delta[active] = joint
                break
            point = _best_on_segment(Q, y, lam, delta, active, current, joint)
            if point is current:
                break
            delta[active] = point
        g = Qy - Q @ delta

    everything = range(n)
    for _ in range(max_sweeps):
        if sweep(everything) < tol:
            return delta
        refine()
    warnings.warn(f"delta subproblem stopped after {max_sweeps} sweeps", ConvergenceWarning)
    return delta


def update_lambda_cob(delta, n, bounds=(1e-4, 1e6)):
    """Minimizer of ``lam * |delta|_1 - n log(lam / 2)`` clamped to ``bounds``."""
    lo, hi = bounds
    if not 0 < lo < hi:
        raise ValueError("bounds must satisfy 0 < lo < hi")
    total = float(np.sum(np.abs(delta)))
    if total <= 0:
        return float(hi)
    return float(np.clip(n / total, lo, hi))


def sure_threshold(w):
    """Soft threshold for unit-variance scores ``w`` by the hybrid SURE rule.

    When the scores look like pure noise, judged by their excess energy
    ``(sum w^2 - N) / N`` against ``log2(N)^1.5 / sqrt(N)``, the universal
    threshold ``sqrt(2 log N)`` is returned. Otherwise the threshold
    minimizes Stein's unbiased risk estimate of soft thresholding,
    ``N - 2 #{|w_i| <= t} + sum min(w_i^2, t^2)``, over ``t`` no larger than
    the universal one.
    """
    w = np.abs(np.asarray(w, dtype=float).reshape(-1))
    n = w.size
    universal = np.sqrt(2.0 * np.log(max(n, 2)))
    excess = (np.sum(w**2) - n) / n
    if excess <= np.log2(max(n, 2)) ** 1.5 / np.sqrt(n):
        return float(universal)
    a = np.sort(w)
    a = a[a <= universal]
    k = np.arange(1, a.size + 1)
    # risk at t = a[k-1]: k scores at or below t, the other n - k clipped to t
    risk = n - 2 * k + np.cumsum(a**2) + (n - k) * a**2
    at_universal = n - 2 * a.size + np.sum(a**2) + (n - a.size) * universal**2
    if a.size == 0 or at_universal <= risk.min():
        return float(universal)
    return float(a[np.argmin(risk)])


def bias_scores(Q, residual, bias=None):
    """Standardized bias scores with their robust center and spread.

    The score of point ``i`` is ``v_i / sqrt([K^-1]_ii)`` with
    ``v_i = [K^-1 r]_i + [K^-1]_ii bias_i``, the quantity the bias update
    soft-thresholds. For inliers it is normal; the median and the median
    absolute deviation estimate its center and spread without being swayed
    by outliers. Measuring deviations from the median keeps the offset that
    outliers cause while they still pull the fit from posing as spread.
    """
    Q = np.asarray(Q, dtype=float)
    qd = np.diag(Q)
    v = Q @ residual
    if bias is not None:
        v = v + qd * bias
    u = v / np.sqrt(qd)
    center = float(np.median(u))
    spread = float(np.median(np.abs(u - center)) / MAD_TO_SD)
    return u, center, spread


def robust_lambda(Q, residual, z=None, bias=None):
    """L1 weight of ``z`` robust standard deviations of the bias scores.

    See :func:`bias_scores`. Without ``z`` the threshold comes from
    :func:`sure_threshold` on the centered, standardized scores: the
    universal ``sqrt(2 log N)`` for clean data and smaller under heavy
    contamination.
    """
    u, center, spread = bias_scores(Q, residual, bias)
    if spread <= 0:
        return 0.0
    if z is None:
        z = sure_threshold((u - center) / spread)
    return float(z * spread * np.sqrt(np.median(np.diag(Q))))


def _check_finite(value, block):
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite objective after the {block} block")
    return value


def fit_cob(train, config=None):
    """Fit the constant bias model by block coordinate descent.

    Tuning phase: each round runs at most ``config.max_inner`` L-BFGS-B steps
    on ``(log s2, log ell..., log sigma2)``, re-estimates ``lam`` with
    ``config.lambda_rule`` and solves the bias subproblem exactly. Rounds
    stop once ``lam`` settles or after ``config.max_tuning_rounds``.

    Fixed-``lam`` phase: the same hyperparameter step followed by an exact
    bias solve, repeated until the relative change of the objective is
    below ``config.tol``. The regularized likelihood is unbounded below as
    the noise variance shrinks and the biases absorb every residual, and at
    a fixed ``lam`` block descent can creep in that direction. The tuning
    rounds therefore continue until the objective has settled as well as
    ``lam``, which hands this phase a point where it has little left to do.

    ``objective_trace`` records the regularized likelihood of the fixed-lam
    phase, which is non-increasing. ``lambda_trace`` records the tuning phase.
    """
    config = config or FitConfig(model="cob")
    if train.n < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} points to fit, got {train.n}")
    start = time.perf_counter()
    X, y, n = train.X, train.y, train.n
    family = config.kernel

    ard = config.ard
    theta0, v = initial_hyperparameters(train, ard)
    params = np.concatenate([theta0, [np.log(0.1 * v)]])
    bounds = kernel_bounds(train, ard) + [noise_bounds(train)]
    delta = np.zeros(n)
    lam = float(np.clip(config.lambda_init, *config.lambda_bounds))
    cache = distance_cache(X, ard)

    def theta_objective(p):
        spec = KernelSpec.from_log_params(family, p[:-1], ard)
        nll, grad, _ = gp.nll_and_grad(X, spec, np.exp(p[-1]), y - delta, cache=cache)
        return nll, grad

    def penalized(nll):
        return nll + lam * float(np.sum(np.abs(delta)))

    issues = []

    def solve_delta(factor):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConvergenceWarning)
            new = solve_delta_subproblem(
                factor, y, lam, delta, config.delta_tol, config.delta_max_sweeps
            )
        if caught and str(caught[-1].message) not in issues:
            issues.append(str(caught[-1].message))
        return new

    def descend(choose_lam=None):
        nonlocal params, delta, lam
        params, nll = minimize_box(theta_objective, params, bounds, config.max_inner)
        _check_finite(nll, "hyperparameter")
        spec = KernelSpec.from_log_params(family, params[:-1], ard)
        factor = gp.training_factor(X, spec, np.exp(params[-1]))
        if choose_lam is not None:
            lam = choose_lam(factor)
        delta = solve_delta(factor)
        return factor

    threshold = config.threshold_z

    def robust_rule(factor):
        # the threshold is settled once, on the scores of the first fit, so
        # the tuning rounds only track the spread and converge smoothly
        nonlocal threshold
        Q = factor.inverse()
        if threshold is None:
            u, center, spread = bias_scores(Q, y - delta, delta)
            threshold = sure_threshold((u - center) / spread) if spread > 0 else 0.0
        new = robust_lambda(Q, y - delta, threshold, delta)
        return float(np.clip(new, *config.lambda_bounds))

    lambda_trace = [lam]
    settled = None
    for _ in range(config.max_tuning_rounds):
        previous = lam
        if config.lambda_rule == "laplace":
            descend()
            lam = update_lambda_cob(delta, n, config.lambda_bounds)
        else:
            # chosen from the same factor the bias step uses
            descend(robust_rule)
        lambda_trace.append(lam)
        logger.debug("cob tuning: lam %.6g, %d nonzero biases", lam, np.count_nonzero(delta))
        value = penalized(theta_objective(params)[0])
        steady = settled is not None and abs(value - settled) <= config.tol * max(1.0, abs(value))
        settled = value
        if abs(lam - previous) <= config.tuning_tol * previous and steady:
            break

    nll, _ = theta_objective(params)
    trace = [_check_finite(penalized(nll), "tuning")]
    converged = False
    outer = 0
    for outer in range(1, config.max_outer + 1):
        descend()
        nll, _ = theta_objective(params)
        trace.append(_check_finite(penalized(nll), "bias"))
        logger.debug("cob outer %d: objective %.10g", outer, trace[-1])
        change = abs(trace[-2] - trace[-1]) / max(1.0, abs(trace[-2]))
        if change < config.tol:
            converged = True
            break

    return CobFit(
        delta=delta,
        sigma2=float(np.exp(params[-1])),
        spec=KernelSpec.from_log_params(family, params[:-1], ard),
        lam=lam,
        train=train,
        objective_trace=tuple(trace),
        lambda_trace=tuple(lambda_trace),
        converged=converged,
        n_outer=outer,
        fit_seconds=time.perf_counter() - start,
        warnings=tuple(issues),
        threshold_z=None if config.lambda_rule == "laplace" else threshold,
    )


def cob_predict(fit, train, Xstar):
    """Latent posterior at ``Xstar`` conditioned on the de-biased responses."""
    noise = np.full(train.n, fit.sigma2)
    return gp.predict(train, fit.spec, noise, train.y - fit.delta, Xstar)
