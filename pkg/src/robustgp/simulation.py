"""Synthetic benchmark data and predictive scores.

Two generators are provided: a 1-D smooth function on ``[-3, 3]`` and the
Friedman function on ``[0, 1]^10``. Training responses are corrupted by a
two-component Gaussian mixture whose second component is shifted by
``mu_o``; test responses carry only the inlier noise.
"""
import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .gp import Dataset


class Generator(str, Enum):
    SYNTH1D = "synth1d"
    FRIEDMAN = "friedman"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        aliases = {
            "synth1d": cls.SYNTH1D,
            "synthetic1d": cls.SYNTH1D,
            "1d": cls.SYNTH1D,
            "friedman": cls.FRIEDMAN,
            "friedman10d": cls.FRIEDMAN,
            "10d": cls.FRIEDMAN,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown generator {value!r}") from None

    @property
    def dim(self):
        return 1 if self is Generator.SYNTH1D else 10


def f_synth1d(x):
    x = np.asarray(x, dtype=float)
    return 0.3 + 0.4 * x + 0.5 * np.sin(2.7 * x) + 1.1 / (1.0 + x**2)


def f_friedman(x):
    """Friedman regression function; only the first five inputs matter.

    Accepts a single 10-vector or an (n, 10) array.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 10:
        raise ValueError(f"Friedman inputs need 10 components, got {x.shape[-1]}")
    x1, x2, x3, x4, x5 = (x[..., k] for k in range(5))
    return 10.0 * np.sin(np.pi * x1 * x2) + 20.0 * (x3 - 0.5) ** 2 + 10.0 * x4 + 5.0 * x5


@dataclass(frozen=True)
class ScenarioSpec:
    """One benchmark scenario and replicate.

    ``sigma_ratio`` is the divisor in ``sigma = mu_o / sigma_ratio`` (6 or 12).
    """

    generator: Generator = Generator.SYNTH1D
    q: float = 0.1
    mu_o: float = 3.0
    sigma_ratio: int = 6
    n_train: int = 300
    n_test: int = 1000
    replicate_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "generator", Generator.parse(self.generator))
        if not 0 < self.q < 1:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if not self.mu_o > 0:
            raise ValueError(f"mu_o must be positive, got {self.mu_o}")
        if self.sigma_ratio not in (6, 12):
            raise ValueError(f"sigma_ratio must be 6 or 12, got {self.sigma_ratio}")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be at least 1")

    @property
    def sigma(self):
        return self.mu_o / self.sigma_ratio

    @property
    def label(self):
        return f"{self.generator.value}_q{self.q:g}_mu{self.mu_o:g}_s{self.sigma_ratio}"


def _inputs(generator, rng, n):
    if generator is Generator.SYNTH1D:
        return rng.uniform(-3.0, 3.0, size=(n, 1))
    return rng.uniform(0.0, 1.0, size=(n, 10))


def _truth(generator, X):
    if generator is Generator.SYNTH1D:
        return f_synth1d(X[:, 0])
    return f_friedman(X)


def generate_scenario(spec):
    """Draw training and test data for one replicate.

    Returns
    -------
    train, test : Dataset
    outlier_mask : ndarray of bool, shape (n_train,)
    """
    rng = np.random.default_rng(spec.replicate_seed)
    X = _inputs(spec.generator, rng, spec.n_train)
    outlier_mask = rng.random(spec.n_train) < spec.q
    noise = rng.normal(0.0, spec.sigma, size=spec.n_train) + spec.mu_o * outlier_mask
    train = Dataset(X, _truth(spec.generator, X) + noise)

    Xt = _inputs(spec.generator, rng, spec.n_test)
    test = Dataset(Xt, _truth(spec.generator, Xt) + rng.normal(0.0, spec.sigma, spec.n_test))
    return train, test, outlier_mask


def toy_outlier_dataset(n=500, n_outliers=2, bias=2.5, noise_var=0.0268, seed=0):
    """1-D illustration data with a handful of large positive outliers.

    Inliers follow ``sin(2 x) / 2`` on ``[-3, 3]`` with Gaussian noise of
    variance ``noise_var``; ``n_outliers`` randomly chosen points are shifted
    up by ``bias``.

    Returns
    -------
    train : Dataset
    outlier_index : ndarray of int, sorted
    """
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-3.0, 3.0, size=n))
    y = 0.5 * np.sin(2.0 * x) + rng.normal(0.0, np.sqrt(noise_var), size=n)
    index = np.sort(rng.choice(n, size=n_outliers, replace=False))
    y[index] += bias
    return Dataset(x[:, None], y), index


def scenario_seed(master_seed, label, replicate):
    """Stable 63-bit seed for ``(scenario label, replicate)`` under a master seed."""
    digest = hashlib.sha256(f"{master_seed}|{label}|{replicate}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def mse(y_true, mean):
    y_true = np.asarray(y_true, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if y_true.shape != mean.shape:
        raise ValueError(f"shape mismatch: {y_true.shape} vs {mean.shape}")
    return float(np.mean((y_true - mean) ** 2))


def nlpd(y_true, mean, var):
    """Average Gaussian negative log predictive density.

    ``var`` must already include observation noise.
    """
    y_true = np.asarray(y_true, dtype=float)
    mean = np.asarray(mean, dtype=float)
    var = np.broadcast_to(np.asarray(var, dtype=float), y_true.shape)
    if y_true.shape != mean.shape:
        raise ValueError(f"shape mismatch: {y_true.shape} vs {mean.shape}")
    if np.any(var <= 0):
        raise ValueError("predictive variances must be positive")
    return float(np.mean((y_true - mean) ** 2 / (2.0 * var) + 0.5 * np.log(2.0 * np.pi * var)))
