"""Fit a model to a CSV file, save it, reload it and predict.

This is what ``robustgp fit`` followed by ``robustgp predict`` does, spelled
out with the library calls.

Run with ``python demos/03_csv_round_trip.py``.
"""
import os
import tempfile

import numpy as np

from robustgp import FitConfig, ScenarioSpec, fit_model, generate_scenario, mse, nlpd
from robustgp import serialize
from robustgp.io import read_dataset, write_dataset
from robustgp.models import predict_observed

work = tempfile.mkdtemp(prefix="robustgp-csv-")
train, test, mask = generate_scenario(ScenarioSpec("synth1d", q=0.2, mu_o=5.0, replicate_seed=1))
write_dataset(os.path.join(work, "train.csv"), train, mask)
write_dataset(os.path.join(work, "test.csv"), test)

# columns x1..xd, y and the optional is_outlier flag
data, flags = read_dataset(os.path.join(work, "train.csv"))
print(f"read {data.n} rows, {int(flags.sum())} flagged as outliers")

fit = fit_model(data, FitConfig(model="cob"))
path = os.path.join(work, "model.json")
serialize.save(fit, path)
back = serialize.load(path)

mean, _, obs_var = predict_observed(back, test.X)
same = np.array_equal(mean, predict_observed(fit, test.X)[0])
print(f"reloaded model predicts identically: {same}")
print(f"test MSE {mse(test.y, mean):.4f}, NLPD {nlpd(test.y, mean, obs_var):.4f}")
hits = np.count_nonzero((fit.delta != 0) & flags)
print(f"{hits} of {int(flags.sum())} true outliers carry a nonzero bias")
