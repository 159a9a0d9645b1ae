"""Fitted models as self-describing JSON documents.

A document records the model kind, kernel, noise and bias estimates, tuning
parameters, diagnostics and the training data, so a loaded model predicts
exactly like the one that was saved. The wall-clock fit time is left out so
that refitting with the same settings reproduces the file byte for byte; a
loaded model reports it as NaN. Python's ``json`` writes floats with
their shortest round-trip representation, which makes the round trip exact.
"""
import dataclasses
import json

import numpy as np

from .cob import CobFit
from .gp import Dataset
from .kernels import KernelSpec
from .plain import PlainFit
from .rab import RabFit

SCHEMA_VERSION = 1
FORMAT = "robustgp-model"

_CLASSES = {"cob": CobFit, "rab": RabFit, "plain": PlainFit}
_ARRAYS = {"delta", "tau_tilde_sq"}
_TUPLES = {"objective_trace", "lambda_trace", "lambdas", "warnings"}
_WALL_CLOCK = {"fit_seconds"}


def _encode(value):
    if isinstance(value, KernelSpec):
        ell = value.lengthscale
        return {
            "family": value.family.value,
            "signal_variance": value.signal_variance,
            "lengthscale": list(ell) if value.ard else ell,
        }
    if isinstance(value, Dataset):
        return {"X": value.X.tolist(), "y": value.y.tolist()}
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return [_encode(v) for v in value]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def model_to_dict(fit):
    kind = fit.kind
    if kind not in _CLASSES:
        raise TypeError(f"cannot serialize object of kind {kind!r}")
    fields = {
        f.name: _encode(getattr(fit, f.name))
        for f in dataclasses.fields(fit)
        if f.name not in _WALL_CLOCK
    }
    return {"format": FORMAT, "schema_version": SCHEMA_VERSION, "model": kind, **fields}


def model_from_dict(doc):
    if doc.get("format") != FORMAT:
        raise ValueError("not a serialized robustgp model")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {version!r}")
    cls = _CLASSES.get(doc.get("model"))
    if cls is None:
        raise ValueError(f"unknown model kind {doc.get('model')!r}")
    values = {}
    for f in dataclasses.fields(cls):
        if f.name in _WALL_CLOCK:
            values[f.name] = float("nan")
            continue
        if f.name not in doc:
            raise ValueError(f"model document lacks field {f.name!r}")
        raw = doc[f.name]
        if f.name == "spec":
            values[f.name] = KernelSpec(raw["family"], raw["signal_variance"], raw["lengthscale"])
        elif f.name == "train":
            values[f.name] = Dataset(np.array(raw["X"], dtype=float), np.array(raw["y"], dtype=float))
        elif f.name in _ARRAYS:
            values[f.name] = np.array(raw, dtype=float)
        elif f.name in _TUPLES:
            values[f.name] = tuple(raw)
        else:
            values[f.name] = raw
    return cls(**values)


def dumps(fit):
    return json.dumps(model_to_dict(fit), indent=1, allow_nan=False)


def loads(text):
    return model_from_dict(json.loads(text))


def save(fit, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(fit))
        fh.write("\n")


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
