"""Replicated benchmark grids: scenarios x models x replicates.

Every cell regenerates its own data from a seed derived from the master
seed, the scenario label and the replicate number, so cells are independent
and results do not depend on how they are scheduled. Rows are sorted by
``(scenario, model, replicate)`` before anything is written.
"""
import dataclasses
import hashlib
import itertools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import FitConfig, ModelKind
from .io import write_table
from .models import fit_model, predict_observed
from .simulation import Generator, ScenarioSpec, generate_scenario, mse, nlpd, scenario_seed

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
RAW_COLUMNS = (
    "scenario", "generator", "q", "mu_o", "sigma_ratio", "model", "replicate",
    "seed", "n_outliers", "mse", "nlpd", "error",
)
AGGREGATE_COLUMNS = (
    "scenario", "model", "n_ok", "n_failed", "mse_mean", "mse_std", "nlpd_mean", "nlpd_std",
)


@dataclasses.dataclass(frozen=True)
class ExperimentGrid:
    """Full factorial design over scenario settings and models.

    The defaults give eight scenarios per generator.
    """

    generators: tuple = (Generator.SYNTH1D, Generator.FRIEDMAN)
    qs: tuple = (0.1, 0.2)
    mu_os: tuple = (3.0, 5.0)
    sigma_ratios: tuple = (6, 12)
    models: tuple = (ModelKind.COB, ModelKind.RAB, ModelKind.PLAIN)
    replicates: int = 15
    n_train: int = 300
    n_test: int = 1000
    master_seed: int = 0
    fit: FitConfig = FitConfig()

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(Generator.parse(g) for g in self.generators))
        object.__setattr__(self, "models", tuple(ModelKind.parse(m) for m in self.models))
        object.__setattr__(self, "qs", tuple(float(v) for v in self.qs))
        object.__setattr__(self, "mu_os", tuple(float(v) for v in self.mu_os))
        object.__setattr__(self, "sigma_ratios", tuple(int(v) for v in self.sigma_ratios))
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if not (self.generators and self.models and self.qs and self.mu_os and self.sigma_ratios):
            raise ValueError("every grid axis needs at least one value")
        # validates each combination up front
        self.scenarios()

    def scenarios(self):
        return [
            ScenarioSpec(g, q, mu, r, self.n_train, self.n_test)
            for g, q, mu, r in itertools.product(
                self.generators, self.qs, self.mu_os, self.sigma_ratios
            )
        ]

    def cells(self):
        return [
            (scenario, model, rep)
            for scenario in self.scenarios()
            for model in self.models
            for rep in range(self.replicates)
        ]

    def to_dict(self):
        return {
            "generators": [g.value for g in self.generators],
            "qs": list(self.qs),
            "mu_os": list(self.mu_os),
            "sigma_ratios": list(self.sigma_ratios),
            "models": [m.value for m in self.models],
            "replicates": self.replicates,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "master_seed": self.master_seed,
            "fit": self.fit.to_dict(),
        }

    def config_hash(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def run_cell(grid, scenario, model, replicate):
    """Fit one model on one replicate; failures become an error string."""
    seed = scenario_seed(grid.master_seed, scenario.label, replicate)
    spec = dataclasses.replace(scenario, replicate_seed=seed)
    row = {
        "scenario": scenario.label,
        "generator": scenario.generator.value,
        "q": scenario.q,
        "mu_o": scenario.mu_o,
        "sigma_ratio": scenario.sigma_ratio,
        "model": model.value,
        "replicate": replicate,
        "seed": seed,
        "n_outliers": 0,
        "mse": float("nan"),
        "nlpd": float("nan"),
        "error": "",
        "fit_seconds": float("nan"),
    }
    try:
        train, test, mask = generate_scenario(spec)
        row["n_outliers"] = int(mask.sum())
        fit = fit_model(train, grid.fit.replace(model=model))
        mean, _, obs_var = predict_observed(fit, test.X)
        row["mse"] = mse(test.y, mean)
        row["nlpd"] = nlpd(test.y, mean, obs_var)
        row["fit_seconds"] = fit.fit_seconds
    except Exception as exc:  # recorded per cell, reported by the caller
        row["error"] = f"{type(exc).__name__}: {exc}"
        logger.info("cell %s/%s/%d failed: %s", scenario.label, model.value, replicate, exc)
    return row


def _run_packed(args):
    return run_cell(*args)


def _sort_key(row):
    return (row["scenario"], row["model"], row["replicate"])


def run_grid(grid, parallelism=1):
    """All cell rows, sorted; ``parallelism`` worker processes when above 1."""
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    jobs = [(grid, s, m, r) for s, m, r in grid.cells()]
    if parallelism == 1:
        rows = [_run_packed(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_run_packed, jobs, chunksize=1))
    return sorted(rows, key=_sort_key)


def _mean_std(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float("nan"), float("nan")
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return float(np.mean(values)), std


def aggregate(rows):
    """Mean and sample standard deviation per ``(scenario, model)``."""
    out = []
    for (scenario, model), group in itertools.groupby(rows, key=lambda r: (r["scenario"], r["model"])):
        group = list(group)
        ok = [r for r in group if not r["error"]]
        mse_mean, mse_std = _mean_std([r["mse"] for r in ok])
        nlpd_mean, nlpd_std = _mean_std([r["nlpd"] for r in ok])
        time_mean, time_std = _mean_std([r["fit_seconds"] for r in ok])
        out.append({
            "scenario": scenario,
            "model": model,
            "n_ok": len(ok),
            "n_failed": len(group) - len(ok),
            "mse_mean": mse_mean,
            "mse_std": mse_std,
            "nlpd_mean": nlpd_mean,
            "nlpd_std": nlpd_std,
            "time_mean": time_mean,
            "time_std": time_std,
        })
    return out


@dataclasses.dataclass(frozen=True)
class ExperimentReport:
    rows: list
    aggregates: list
    provenance: dict

    @property
    def failures(self):
        return [r for r in self.rows if r["error"]]

    def to_dict(self):
        """Report document without wall-clock fields, so reruns compare equal."""
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "provenance": self.provenance,
            "aggregates": [{k: a[k] for k in AGGREGATE_COLUMNS} for a in self.aggregates],
            "failures": [
                {"scenario": r["scenario"], "model": r["model"], "replicate": r["replicate"],
                 "error": r["error"]}
                for r in self.failures
            ],
        }


def run_experiment(grid, parallelism=1):
    rows = run_grid(grid, parallelism)
    provenance = {
        "config_hash": grid.config_hash(),
        "master_seed": grid.master_seed,
        "version": __version__,
        "config": grid.to_dict(),
    }
    return ExperimentReport(rows, aggregate(rows), provenance)


def write_report(report, out_dir):
    """Write the result files into ``out_dir``.

    ``raw.csv``, ``aggregate.csv`` and ``report.json`` are deterministic for
    a given grid. Fit times go to ``timing.csv`` and the per-scenario bar
    chart tables under ``figures/``, which also carry timing columns.
    """
    os.makedirs(os.path.join(out_dir, "figures"), exist_ok=True)
    write_table(
        os.path.join(out_dir, "raw.csv"),
        RAW_COLUMNS,
        ([r[c] for c in RAW_COLUMNS] for r in report.rows),
    )
    write_table(
        os.path.join(out_dir, "aggregate.csv"),
        AGGREGATE_COLUMNS,
        ([a[c] for c in AGGREGATE_COLUMNS] for a in report.aggregates),
    )
    write_table(
        os.path.join(out_dir, "timing.csv"),
        ("scenario", "model", "replicate", "fit_seconds"),
        ([r["scenario"], r["model"], r["replicate"], r["fit_seconds"]] for r in report.rows),
    )
    figure_cols = ("model", "mse_mean", "mse_std", "nlpd_mean", "nlpd_std", "time_mean", "time_std")
    for scenario, group in itertools.groupby(report.aggregates, key=lambda a: a["scenario"]):
        write_table(
            os.path.join(out_dir, "figures", f"{scenario}.csv"),
            figure_cols,
            ([a[c] for c in figure_cols] for a in group),
        )
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
