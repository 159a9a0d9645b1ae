"""Ordinary GP regression with homoscedastic Gaussian noise.

Serves as the non-robust baseline in experiments.
"""
import time
from dataclasses import dataclass

import numpy as np

from . import gp
from .config import FitConfig
from .kernels import KernelSpec, distance_cache
from ._fitting import initial_hyperparameters, kernel_bounds, minimize_box, noise_bounds


@dataclass(frozen=True)
class PlainFit:
    spec: KernelSpec
    sigma2: float
    train: gp.Dataset
    nll: float
    fit_seconds: float = 0.0

    kind = "plain"

    @property
    def noise_diag(self):
        return np.full(self.train.n, self.sigma2)

    @property
    def residual(self):
        return self.train.y

    @property
    def observation_noise(self):
        return self.sigma2

    def predict(self, Xstar):
        return gp.predict(self.train, self.spec, self.noise_diag, self.residual, Xstar)


def _objective(family, ard, X, y):
    cache = distance_cache(X, ard)

    def fun(p):
        spec = KernelSpec.from_log_params(family, p[:-1], ard)
        nll, grad, _ = gp.nll_and_grad(X, spec, np.exp(p[-1]), y, cache=cache)
        return nll, grad

    return fun


def fit_plain(train, config=None):
    """Maximum marginal likelihood over ``(log s2, log ell..., log sigma2)``."""
    config = config or FitConfig(model="plain")
    start = time.perf_counter()
    theta0, v = initial_hyperparameters(train, config.ard)
    x0 = np.concatenate([theta0, [np.log(0.1 * v)]])
    bounds = kernel_bounds(train, config.ard) + [noise_bounds(train)]
    fun = _objective(config.kernel, config.ard, train.X, train.y)
    x, nll = minimize_box(fun, x0, bounds, config.plain_maxiter)
    return PlainFit(
        spec=KernelSpec.from_log_params(config.kernel, x[:-1], config.ard),
        sigma2=float(np.exp(x[-1])),
        train=train,
        nll=nll,
        fit_seconds=time.perf_counter() - start,
    )
