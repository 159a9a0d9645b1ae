"""Fit configuration shared by the library and the command line."""
import dataclasses
from dataclasses import dataclass
from enum import Enum

from .kernels import KernelFamily


class ModelKind(str, Enum):
    COB = "cob"
    RAB = "rab"
    PLAIN = "plain"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        aliases = {"cob": cls.COB, "rab": cls.RAB, "plain": cls.PLAIN, "plaingp": cls.PLAIN}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown model {value!r}; expected cob, rab or plain") from None


@dataclass(frozen=True)
class FitConfig:
    """Iteration caps, tolerances and tuning-parameter bounds.

    ``lambda_rule`` picks how the constant bias model re-estimates its L1
    weight: ``"robust"`` ties it to a robust noise scale of the current fit,
    ``"laplace"`` uses the Laplace-prior rate ``N / sum|delta|``.
    ``rab_rule`` does the same for the random bias model's variance penalty:
    ``"marginal"`` fits it to leave-one-out residuals, ``"joint"`` uses the
    stationary point of the joint density.
    ``lambda_bounds`` applies to the constant bias model; ``lambda1_bounds``,
    ``lambda2_bounds`` and ``lambda3_bounds`` to the random bias model.
    ``ard`` gives the kernel one lengthscale per input dimension instead of a
    shared one.
    """

    model: ModelKind = ModelKind.COB
    kernel: KernelFamily = KernelFamily.SQUARED_EXPONENTIAL
    ard: bool = False
    max_outer: int = 100
    tol: float = 1e-6
    max_inner: int = 25
    max_tuning_rounds: int = 100
    tuning_tol: float = 1e-3
    delta_tol: float = 1e-8
    delta_max_sweeps: int = 500
    lambda_rule: str = "robust"
    rab_rule: str = "marginal"
    threshold_z: float = None
    lambda_init: float = 1.0
    lambda_bounds: tuple = (1e-4, 1e6)
    lambdas_init: tuple = (1.0, 2.0, 1.0)
    lambda1_bounds: tuple = (1e-6, 1e6)
    lambda2_bounds: tuple = (1.0 + 1e-3, 1e3)
    lambda3_bounds: tuple = (1e-6, 1e6)
    plain_maxiter: int = 500
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind.parse(self.model))
        object.__setattr__(self, "kernel", KernelFamily.parse(self.kernel))
        object.__setattr__(self, "ard", bool(self.ard))
        if self.lambda_rule not in ("robust", "laplace"):
            raise ValueError(f"lambda_rule must be 'robust' or 'laplace', got {self.lambda_rule!r}")
        if self.rab_rule not in ("marginal", "joint"):
            raise ValueError(f"rab_rule must be 'marginal' or 'joint', got {self.rab_rule!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        for name in ("max_outer", "max_inner", "max_tuning_rounds", "delta_max_sweeps",
                     "plain_maxiter"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        for name in ("lambda_bounds", "lambda1_bounds", "lambda2_bounds", "lambda3_bounds",
                     "lambdas_init"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        lo, hi = self.lambda_bounds
        if not 0 < lo < hi:
            raise ValueError("lambda_bounds must satisfy 0 < lo < hi")
        if self.lambda2_bounds[0] <= 1.0:
            raise ValueError("lambda2 lower bound must exceed 1")

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["model"] = self.model.value
        out["kernel"] = self.kernel.value
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)
