"""Gaussian likelihood machinery shared by every model.

All solves go through a Cholesky factor of ``D + C_xx`` where ``D`` is a
diagonal noise matrix. A homoscedastic model passes ``D = sigma2 * I``; the
random bias model passes its per-point variances.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .kernels import kernel_grad, kernel_matrix, _as_points

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))

JITTER_START = 1e-8
JITTER_MAX = 1e-4


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky failed even after the largest allowed jitter."""

    def __init__(self, message, jitter):
        super().__init__(message)
        self.jitter = jitter


@dataclass(frozen=True)
class Dataset:
    """Training or test data: ``X`` is (N, d), ``y`` is (N,)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = _as_points(self.X, "X")
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if y.shape[0] < 1:
            raise ValueError("dataset is empty")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite entries")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class PredictiveDist:
    """Posterior mean and variance of the latent function at test inputs."""

    mean: np.ndarray
    variance: np.ndarray

    def __len__(self):
        return self.mean.shape[0]


@dataclass(frozen=True)
class CholFactor:
    """Lower Cholesky factor of ``K + jitter * I``."""

    L: np.ndarray
    jitter: float

    @property
    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))

    @property
    def n(self):
        return self.L.shape[0]

    def solve(self, b):
        return linalg.cho_solve((self.L, True), b, check_finite=False)

    def inverse(self):
        inv, info = linalg.lapack.dpotri(self.L, lower=1)
        if info != 0:
            raise FactorizationError(f"dpotri failed with info={info}", self.jitter)
        return np.tril(inv) + np.tril(inv, -1).T

    def matrix(self):
        return self.L @ self.L.T


def cholesky(K):
    """Factor a symmetric matrix, adding diagonal jitter only if needed.

    Jitter escalates by factors of ten from ``1e-8`` to ``1e-4`` times the
    mean diagonal.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {K.shape}")
    if not np.all(np.isfinite(K)):
        raise FactorizationError("matrix has non-finite entries", 0.0)
    try:
        return CholFactor(linalg.cholesky(K, lower=True, check_finite=False), 0.0)
    except linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(K)))
    if not scale > 0:
        raise FactorizationError("matrix has non-positive mean diagonal", 0.0)
    jitter = JITTER_START * scale
    while jitter <= JITTER_MAX * scale * (1 + 1e-12):
        try:
            L = linalg.cholesky(
                K + jitter * np.eye(K.shape[0]), lower=True, check_finite=False
            )
            logger.debug("cholesky needed jitter %.3g", jitter)
            return CholFactor(L, jitter)
        except linalg.LinAlgError:
            jitter *= 10.0
    raise FactorizationError(
        f"cholesky failed with jitter up to {jitter / 10.0:.3g}", jitter / 10.0
    )


def gauss_nll(y_centered, K):
    """Negative log density of ``N(0, K)`` evaluated at ``y_centered``."""
    r = np.asarray(y_centered, dtype=float).reshape(-1)
    factor = K if isinstance(K, CholFactor) else cholesky(K)
    if factor.n != r.shape[0]:
        raise ValueError(f"K is {factor.n}x{factor.n} but y has {r.shape[0]} entries")
    z = linalg.solve_triangular(factor.L, r, lower=True, check_finite=False)
    return 0.5 * (r.shape[0] * LOG_2PI + factor.logdet + float(z @ z))


def _noise_vector(noise_diag, n):
    noise = np.asarray(noise_diag, dtype=float)
    if noise.ndim == 0:
        noise = np.full(n, float(noise))
    if noise.shape != (n,):
        raise ValueError(f"noise_diag has shape {noise.shape}, expected ({n},)")
    if np.any(noise <= 0) or not np.all(np.isfinite(noise)):
        raise ValueError("noise_diag entries must be positive and finite")
    return noise


def training_factor(X, spec, noise_diag):
    """Cholesky factor of ``diag(noise_diag) + C_xx``."""
    K = kernel_matrix(spec, X)
    K[np.diag_indices_from(K)] += _noise_vector(noise_diag, K.shape[0])
    return cholesky(K)


def predict(train, spec, noise_diag, residual, Xstar, factor=None):
    """Posterior of the latent function at ``Xstar``.

    ``residual`` is the training response with the bias-model mean removed.
    The returned variance excludes observation noise.
    """
    Xstar = _as_points(Xstar, "Xstar")
    if Xstar.shape[1] != train.dim:
        raise ValueError(
            f"Xstar has {Xstar.shape[1]} columns, training data has {train.dim}"
        )
    residual = np.asarray(residual, dtype=float).reshape(-1)
    if residual.shape[0] != train.n:
        raise ValueError("residual length does not match training data")
    if factor is None:
        factor = training_factor(train.X, spec, noise_diag)
    Kxs = kernel_matrix(spec, train.X, Xstar)
    mean = Kxs.T @ factor.solve(residual)
    V = linalg.solve_triangular(factor.L, Kxs, lower=True, check_finite=False)
    var = spec.signal_variance - np.sum(V * V, axis=0)
    return PredictiveDist(mean, np.maximum(var, 0.0))


def nll_and_grad(X, spec, noise_diag, residual, per_point_noise=False, cache=None):
    """Gaussian NLL of ``residual`` under ``diag(noise) + C_xx`` and its gradient.

    The gradient is taken w.r.t. ``(log s2, log ell...)`` followed by the noise
    parameters: one shared ``log sigma2`` or, with ``per_point_noise``, one
    log-variance per training point. The last returned element is the
    gradient w.r.t. the residual vector itself, ``K^{-1} r``. Passing
    :func:`~robustgp.kernels.distance_cache` of ``X`` as ``cache`` saves work
    in loops.
    """
    n = X.shape[0]
    noise = _noise_vector(noise_diag, n)
    C, dC_dlog_ell = kernel_grad(spec, X, cache)
    K = C.copy()
    K[np.diag_indices_from(K)] += noise
    factor = cholesky(K)
    r = np.asarray(residual, dtype=float).reshape(-1)
    alpha = factor.solve(r)
    nll = 0.5 * (n * LOG_2PI + factor.logdet + float(r @ alpha))
    Kinv = factor.inverse()
    # d nll / dK = 0.5 * (K^-1 - alpha alpha^T)
    W = Kinv - np.outer(alpha, alpha)
    g_s2 = 0.5 * float(np.sum(W * C))
    g_ell = [0.5 * float(np.sum(W * d)) for d in dC_dlog_ell]
    w_diag = 0.5 * np.diag(W) * noise
    g_noise = w_diag if per_point_noise else np.array([np.sum(w_diag)])
    grad = np.concatenate([[g_s2], g_ell, g_noise])
    return nll, grad, alpha


def nll_grad_theta(train, spec, noise_diag, residual, per_point_noise=False):
    """Gradient of the Gaussian NLL w.r.t. the log hyperparameters."""
    _, grad, _ = nll_and_grad(train.X, spec, noise_diag, residual, per_point_noise)
    return grad
