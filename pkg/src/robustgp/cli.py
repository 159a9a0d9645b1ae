"""Command-line interface: ``robustgp simulate|fit|predict|eval|experiment``.

Settings come from built-in defaults, then an optional JSON ``--config``
file, then command-line flags, each overriding the previous. Exit codes are
0 on success, 1 for usage errors, 2 for data errors and 3 for numerical
failures. ``ROBUSTGP_LOG`` sets the log level (error, info or debug).
"""
import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from . import __version__, serialize
from .config import FitConfig
from .experiment import ExperimentGrid, run_experiment, write_report
from .io import (
    DataError,
    read_columns,
    read_dataset,
    read_inputs,
    write_dataset,
    write_rows,
    write_table,
)
from .models import fit_model, predict_observed, summary
from .simulation import ScenarioSpec, generate_scenario, mse, nlpd

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

logger = logging.getLogger("robustgp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# flag name -> FitConfig field, for flags that override fit settings
_FIT_FLAGS = {
    "model": "model",
    "kernel": "kernel",
    "ard": "ard",
    "max_outer": "max_outer",
    "tol": "tol",
    "lambda_rule": "lambda_rule",
    "threshold_z": "threshold_z",
    "rab_rule": "rab_rule",
}
_GRID_KEYS = {"generators", "qs", "mu_os", "sigma_ratios", "models", "replicates",
              "n_train", "n_test"}


def _add_common(p, out_help):
    p.add_argument("--config", help="JSON file with settings")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--out", help=out_help)


def _add_fit_flags(p, with_model=True):
    if with_model:
        p.add_argument("--model", choices=["cob", "rab", "plain"])
    p.add_argument("--kernel", choices=["se", "exp"])
    p.add_argument("--ard", action="store_true", default=None,
                   help="one lengthscale per input dimension")
    p.add_argument("--max-outer", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--lambda-rule", choices=["robust", "laplace"])
    p.add_argument("--threshold-z", type=float)
    p.add_argument("--rab-rule", choices=["marginal", "joint"])


def build_parser():
    parser = _Parser(prog="robustgp", description="Outlier-robust GP regression.")
    parser.add_argument("--version", action="version", version=f"robustgp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a benchmark train/test pair")
    _add_common(p, "output directory for train.csv and test.csv")
    p.add_argument("--gen", default="synth1d", choices=["synth1d", "friedman"])
    p.add_argument("--q", type=float, default=0.1)
    p.add_argument("--mu-o", type=float, default=3.0)
    p.add_argument("--sigma-ratio", type=int, default=6, choices=[6, 12])
    p.add_argument("--n-train", type=int, default=300)
    p.add_argument("--n-test", type=int, default=1000)

    p = sub.add_parser("fit", help="fit a model to a training CSV")
    p.add_argument("train", help="CSV with columns x1..xd, y")
    _add_common(p, "model file to write")
    _add_fit_flags(p)
    p.add_argument("--fit-log", help="fit log file (default: <out>.log.json)")

    p = sub.add_parser("predict", help="predict at the inputs of a CSV")
    p.add_argument("model", help="model file written by fit")
    p.add_argument("inputs", help="CSV with columns x1..xd")
    _add_common(p, "predictions CSV (default: standard output)")

    p = sub.add_parser("eval", help="score predictions against held-out responses")
    p.add_argument("predictions", help="CSV written by predict")
    p.add_argument("truth", help="CSV with a y column, row-aligned with the predictions")
    _add_common(p, "metrics JSON file")

    p = sub.add_parser("experiment", help="run a replicated benchmark grid")
    _add_common(p, "output directory")
    p.add_argument("--parallelism", type=int, default=1, help="worker processes")
    p.add_argument("--gen", nargs="+", choices=["synth1d", "friedman"])
    p.add_argument("--q", nargs="+", type=float)
    p.add_argument("--mu-o", nargs="+", type=float)
    p.add_argument("--sigma-ratio", nargs="+", type=int, choices=[6, 12])
    p.add_argument("--models", nargs="+", choices=["cob", "rab", "plain"])
    p.add_argument("--replicates", type=int)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    _add_fit_flags(p, with_model=False)
    return parser


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return data


def _fit_config(args, file_values):
    fit_names = {f.name for f in dataclasses.fields(FitConfig)}
    values = {k: v for k, v in file_values.items() if k in fit_names}
    for flag, name in _FIT_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[name] = value
    if args.seed is not None:
        values["seed"] = args.seed
    try:
        return FitConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid fit settings: {exc}") from None


def _reject_unknown(file_values, allowed):
    unknown = sorted(set(file_values) - allowed)
    if unknown:
        raise UsageError(f"unknown config keys: {unknown}")


def _require_out(args):
    if not args.out:
        raise UsageError(f"{args.command}: --out is required")
    return args.out


def cmd_simulate(args):
    file_values = _load_config(args.config)
    _reject_unknown(file_values, {"seed"})
    seed = args.seed if args.seed is not None else int(file_values.get("seed", 0))
    out = _require_out(args)
    try:
        spec = ScenarioSpec(args.gen, args.q, args.mu_o, args.sigma_ratio,
                            args.n_train, args.n_test, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    train, test, mask = generate_scenario(spec)
    os.makedirs(out, exist_ok=True)
    write_dataset(os.path.join(out, "train.csv"), train, mask)
    write_dataset(os.path.join(out, "test.csv"), test)
    logger.info("wrote %s scenario %s to %s", spec.generator.value, spec.label, out)
    return EXIT_OK


def cmd_fit(args):
    file_values = _load_config(args.config)
    _reject_unknown(file_values, {f.name for f in dataclasses.fields(FitConfig)})
    config = _fit_config(args, file_values)
    out = _require_out(args)
    train, _ = read_dataset(args.train)
    fit = fit_model(train, config)
    serialize.save(fit, out)
    log = {"config": config.to_dict(), "train": os.path.abspath(args.train), **summary(fit)}
    if fit.kind == "cob":
        log["bias_indices"] = np.flatnonzero(fit.delta).tolist()
        log["delta"] = fit.delta.tolist()
    elif fit.kind == "rab":
        log["tau_tilde_sq"] = fit.tau_tilde_sq.tolist()
    with open(args.fit_log or out + ".log.json", "w", encoding="utf-8") as fh:
        json.dump(log, fh, indent=1)
        fh.write("\n")
    print(json.dumps({k: log[k] for k in ("model", "observation_noise", "fit_seconds")}))
    return EXIT_OK


def cmd_predict(args):
    _reject_unknown(_load_config(args.config), {"seed"})
    try:
        fit = serialize.load(args.model)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot load model {args.model}: {exc}") from None
    X = read_inputs(args.inputs)
    if X.shape[1] != fit.train.dim:
        raise DataError(
            f"{args.inputs} has {X.shape[1]} input columns, model expects {fit.train.dim}"
        )
    mean, latent_var, obs_var = predict_observed(fit, X)
    header = [f"x{k + 1}" for k in range(X.shape[1])] + ["mean", "latent_var", "obs_var"]
    rows = zip(*[X[:, k] for k in range(X.shape[1])], mean, latent_var, obs_var)
    if args.out:
        write_table(args.out, header, rows)
    else:
        write_rows(sys.stdout, header, rows)
    return EXIT_OK


def cmd_eval(args):
    _reject_unknown(_load_config(args.config), {"seed"})
    mean, obs_var = read_columns(args.predictions, ["mean", "obs_var"])
    (y,) = read_columns(args.truth, ["y"])
    if len(y) != len(mean):
        raise DataError(f"row count mismatch: {len(mean)} predictions, {len(y)} responses")
    try:
        metrics = {"n": len(y), "mse": mse(y, mean), "nlpd": nlpd(y, mean, obs_var)}
    except ValueError as exc:
        raise DataError(str(exc)) from None
    text = json.dumps(metrics, indent=1)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def cmd_experiment(args):
    file_values = _load_config(args.config)
    fit_names = {f.name for f in dataclasses.fields(FitConfig)}
    _reject_unknown(file_values, fit_names | _GRID_KEYS)
    out = _require_out(args)
    if args.parallelism < 1:
        raise UsageError("--parallelism must be at least 1")
    config = _fit_config(args, file_values)
    grid_values = {k: v for k, v in file_values.items() if k in _GRID_KEYS}
    flags = {"gen": "generators", "q": "qs", "mu_o": "mu_os", "sigma_ratio": "sigma_ratios",
             "models": "models", "replicates": "replicates", "n_train": "n_train",
             "n_test": "n_test"}
    for flag, key in flags.items():
        value = getattr(args, flag)
        if value is not None:
            grid_values[key] = value
    try:
        grid = ExperimentGrid(master_seed=config.seed, fit=config, **grid_values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid grid: {exc}") from None
    report = run_experiment(grid, args.parallelism)
    write_report(report, out)
    for a in report.aggregates:
        print(f"{a['scenario']:<28} {a['model']:<6} mse {a['mse_mean']:.4f} "
              f"({a['mse_std']:.4f})  nlpd {a['nlpd_mean']:.4f}  failed {a['n_failed']}")
    if report.failures:
        logger.error("%d of %d cells failed", len(report.failures), len(report.rows))
        return EXIT_NUMERIC
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
}


def _setup_logging():
    name = os.environ.get("ROBUSTGP_LOG", "error").strip().lower()
    if name not in LOG_LEVELS:
        raise UsageError(f"ROBUSTGP_LOG must be one of {sorted(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    logger.setLevel(LOG_LEVELS[name])


def main(argv=None):
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # raised by the library on invalid data, e.g. too few points
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
