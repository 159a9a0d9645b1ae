"""Two gross outliers in a smooth 1-D signal.

Fits the plain GP, the constant bias model and the random bias model to the
same 500 points and shows which points each robust model singles out.

Run with ``python demos/01_two_outliers.py``.
"""
import numpy as np

from robustgp import FitConfig, fit_model, toy_outlier_dataset

train, outliers = toy_outlier_dataset(n=500, n_outliers=2, bias=2.5, seed=0)
print(f"{train.n} points, outliers injected at {outliers.tolist()}")

# the plain GP has to explain the two spikes with its noise variance
plain = fit_model(train, FitConfig(model="plain", kernel="exp"))
print(f"plain GP noise variance      {plain.sigma2:.4f}")

# the constant bias model moves them into a sparse bias vector instead
cob = fit_model(train, FitConfig(model="cob", kernel="exp"))
large = np.flatnonzero(np.abs(cob.delta) > 0.5)
print(f"constant bias noise variance {cob.sigma2:.4f}")
print(f"  points with |bias| > 0.5:  {large.tolist()}  biases {np.round(cob.delta[large], 3)}")
print(f"  L1 weight {cob.lam:.3f}, {np.count_nonzero(cob.delta)} nonzero biases")

# the random bias model gives each point its own noise variance
rab = fit_model(train, FitConfig(model="rab", kernel="exp"))
tau = rab.tau_tilde_sq
top = np.argsort(tau)[-2:][::-1]
print(f"random bias median variance  {np.median(tau):.4f}")
print(f"  largest variances at {top.tolist()}: {np.round(tau[top], 4)}")

# away from the spikes all three curves agree; next to them the plain GP is pulled up
grid = np.linspace(-3, 3, 7)[:, None]
for name, fit in (("plain", plain), ("cob", cob), ("rab", rab)):
    print(f"{name:>5} mean on a coarse grid: {np.round(fit.predict(grid).mean, 3)}")
