"""Stationary covariance functions.

Two families are provided, squared exponential and exponential. Both are
parameterized by a signal variance ``s2`` and a lengthscale ``ell``, which is
either one shared scalar (isotropic) or one value per input dimension
(automatic relevance determination, ARD). The optimizers work on
``(log s2, log ell...)``.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist, pdist


class KernelFamily(str, Enum):
    SQUARED_EXPONENTIAL = "se"
    EXPONENTIAL = "exp"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {
            "se": cls.SQUARED_EXPONENTIAL,
            "squaredexponential": cls.SQUARED_EXPONENTIAL,
            "squared_exponential": cls.SQUARED_EXPONENTIAL,
            "rbf": cls.SQUARED_EXPONENTIAL,
            "exp": cls.EXPONENTIAL,
            "exponential": cls.EXPONENTIAL,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown kernel family {value!r}") from None


@dataclass(frozen=True)
class KernelSpec:
    """Covariance family with its hyperparameters.

    Parameters
    ----------
    family : KernelFamily
    signal_variance : float
        Prior variance of the latent function, ``c(x, x)``.
    lengthscale : float or tuple of float
        Shared isotropic lengthscale, or one per input dimension.
    """

    family: KernelFamily
    signal_variance: float
    lengthscale: object

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily.parse(self.family))
        s2 = float(self.signal_variance)
        if not (np.isfinite(s2) and s2 > 0):
            raise ValueError(f"signal_variance must be positive, got {s2}")
        ell = np.asarray(self.lengthscale, dtype=float)
        if ell.ndim > 1 or ell.size == 0:
            raise ValueError("lengthscale must be a scalar or a 1-D sequence")
        if not (np.all(np.isfinite(ell)) and np.all(ell > 0)):
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        ell = float(ell) if ell.ndim == 0 else tuple(float(v) for v in ell)
        object.__setattr__(self, "signal_variance", s2)
        object.__setattr__(self, "lengthscale", ell)

    @property
    def ard(self):
        return isinstance(self.lengthscale, tuple)

    @property
    def n_params(self):
        """Number of log hyperparameters, ``1 + number of lengthscales``."""
        return 1 + (len(self.lengthscale) if self.ard else 1)

    @property
    def log_params(self):
        return np.log(np.concatenate([[self.signal_variance], np.atleast_1d(self.lengthscale)]))

    @classmethod
    def from_log_params(cls, family, log_params, ard=False):
        """Inverse of :attr:`log_params`; ``ard`` keeps a 1-D lengthscale a tuple."""
        log_params = np.asarray(log_params, dtype=float)
        ell = np.exp(log_params[1:])
        if len(ell) == 1 and not ard:
            ell = ell[0]
        return cls(family, float(np.exp(log_params[0])), ell)


def n_kernel_params(dim, ard):
    return 1 + (dim if ard else 1)


def _as_points(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError(f"{name} must be a 2-D array of points, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    return X


def _profile(family, dist, ell):
    """Correlation as a function of distance, before scaling by s2."""
    if family is KernelFamily.SQUARED_EXPONENTIAL:
        return np.exp(-0.5 * (dist / ell) ** 2)
    return np.exp(-dist / ell)


def _check_dim(spec, dim):
    if spec.ard and len(spec.lengthscale) != dim:
        raise ValueError(
            f"kernel has {len(spec.lengthscale)} lengthscales but inputs have {dim} columns"
        )


def _scaled(spec, X):
    """Inputs divided by per-dimension lengthscales, with the remaining scalar."""
    if spec.ard:
        _check_dim(spec, X.shape[-1])
        return X / np.asarray(spec.lengthscale), 1.0
    return X, spec.lengthscale


def kernel_eval(spec, a, b):
    """Covariance between two single points ``a`` and ``b``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("kernel inputs must be finite")
    a, ell = _scaled(spec, a)
    b, _ = _scaled(spec, b)
    # symmetric by construction: |a - b| == |b - a| bitwise
    dist = np.sqrt(np.sum((a - b) ** 2))
    return float(spec.signal_variance * _profile(spec.family, dist, ell))


def kernel_matrix(spec, X, Z=None):
    """Cross-covariance matrix with entries ``c(X[i], Z[j])``.

    When ``Z`` is omitted the symmetric training covariance of ``X`` is
    returned, with the diagonal equal to ``signal_variance`` exactly.
    """
    X = _as_points(X, "X")
    symmetric = Z is None
    Z = X if symmetric else _as_points(Z, "Z")
    if X.shape[1] != Z.shape[1]:
        raise ValueError(
            f"dimension mismatch: X has {X.shape[1]} columns, Z has {Z.shape[1]}"
        )
    Xs, ell = _scaled(spec, X)
    Zs, _ = _scaled(spec, Z)
    dist = pairwise_distances(Xs) if symmetric else cdist(Xs, Zs)
    return spec.signal_variance * _profile(spec.family, dist, ell)


def pairwise_distances(X):
    """Exactly symmetric Euclidean distance matrix with a zero diagonal."""
    X = _as_points(X, "X")
    dist = np.triu(cdist(X, X), 1)
    return dist + dist.T


def distance_cache(X, ard=False):
    """Precomputed geometry for :func:`kernel_grad`.

    Pairwise distances for isotropic kernels, or the per-dimension squared
    differences, shape ``(d, N, N)``, for ARD kernels.
    """
    X = _as_points(X, "X")
    if not ard:
        return pairwise_distances(X)
    diff = X.T[:, :, None] - X.T[:, None, :]
    return diff * diff


def kernel_grad(spec, X, cache=None):
    """Training covariance and its derivatives w.r.t. each ``log ell``.

    ``cache`` may carry :func:`distance_cache` of ``X`` for the same kind of
    kernel. The derivative w.r.t. ``log s2`` is the covariance itself.

    Returns
    -------
    K : ndarray, shape (N, N)
    dK_dlog_ell : list of ndarray, shape (N, N)
        One entry per lengthscale.
    """
    if cache is None:
        cache = distance_cache(X, spec.ard)
    if not spec.ard:
        K = spec.signal_variance * _profile(spec.family, cache, spec.lengthscale)
        scaled = cache / spec.lengthscale
        if spec.family is KernelFamily.SQUARED_EXPONENTIAL:
            return K, [K * scaled**2]
        return K, [K * scaled]

    _check_dim(spec, cache.shape[0])
    inv_sq = 1.0 / np.square(spec.lengthscale)
    parts = cache * inv_sq[:, None, None]
    sq = np.triu(parts.sum(axis=0), 1)
    sq = sq + sq.T
    if spec.family is KernelFamily.SQUARED_EXPONENTIAL:
        K = spec.signal_variance * np.exp(-0.5 * sq)
        return K, [K * p for p in parts]
    dist = np.sqrt(sq)
    K = spec.signal_variance * np.exp(-dist)
    # d dist / d log ell_k = -parts_k / dist, zero on the diagonal
    safe = np.where(dist > 0, dist, 1.0)
    return K, [K * p / safe for p in parts]
def median_pairwise_distance(X):
    X = _as_points(X, "X")
    if X.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(X)))
    return med if med > 0 else 1.0
