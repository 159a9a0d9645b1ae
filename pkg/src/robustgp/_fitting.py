"""Initialization and bounded quasi-Newton steps used by all fitters."""
import numpy as np
from scipy import optimize

from .kernels import median_pairwise_distance


def data_scale(y):
    """Variance of ``y``, falling back to its second moment for constant data."""
    v = float(np.var(y))
    if v > 0:
        return v
    m2 = float(np.mean(np.square(y)))
    return m2 if m2 > 0 else 1.0


def initial_hyperparameters(train, ard=False):
    """Starting ``(log s2, log ell...)`` and the data scale used for noise.

    ARD lengthscales all start at the isotropic value.
    """
    v = data_scale(train.y)
    ell = median_pairwise_distance(train.X)
    return np.array([np.log(v)] + [np.log(ell)] * n_lengthscales(train, ard)), v


def n_lengthscales(train, ard):
    return train.dim if ard else 1


def kernel_bounds(train, ard=False):
    """Box constraints on ``(log s2, log ell...)``, generous but finite."""
    v = data_scale(train.y)
    # zero-mean prior: the signal variance may need to absorb a large offset
    top = max(v, float(np.mean(np.square(train.y))))
    ell = median_pairwise_distance(train.X)
    return [(np.log(1e-4 * v), np.log(1e4 * top))] + [
        (np.log(1e-3 * ell), np.log(1e3 * ell))
    ] * n_lengthscales(train, ard)


def noise_bounds(train):
    v = data_scale(train.y)
    # the floor keeps K well enough conditioned for its explicit inverse
    return (np.log(1e-6 * v), np.log(1e2 * v))


def minimize_box(fun, x0, bounds, maxiter, gtol=1e-6, ftol=1e-12):
    """L-BFGS-B from ``x0``; never returns a point worse than ``x0``."""
    x0 = np.clip(np.asarray(x0, dtype=float), [b[0] for b in bounds], [b[1] for b in bounds])
    f0, _ = fun(x0)
    res = optimize.minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": int(maxiter), "gtol": gtol, "ftol": ftol},
    )
    if np.isfinite(res.fun) and res.fun <= f0:
        return np.asarray(res.x, dtype=float), float(res.fun)
    return x0, float(f0)
