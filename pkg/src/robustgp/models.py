"""Model dispatch shared by the experiment runner and the command line."""
from .cob import fit_cob
from .config import FitConfig, ModelKind
from .plain import fit_plain
from .rab import fit_rab

_FITTERS = {ModelKind.COB: fit_cob, ModelKind.RAB: fit_rab, ModelKind.PLAIN: fit_plain}


def fit_model(train, config=None):
    """Fit the model named by ``config.model`` to ``train``."""
    config = config or FitConfig()
    return _FITTERS[config.model](train, config)


def predict_observed(fit, Xstar):
    """Latent mean, latent variance and observation variance at ``Xstar``.

    The observation variance adds the model's inlier noise estimate to the
    latent variance.
    """
    dist = fit.predict(Xstar)
    return dist.mean, dist.variance, dist.variance + fit.observation_noise


def summary(fit):
    """Plain-data description of a fit for logs and reports."""
    spec = fit.spec
    out = {
        "model": fit.kind,
        "kernel": spec.family.value,
        "signal_variance": spec.signal_variance,
        "lengthscale": list(spec.lengthscale) if spec.ard else spec.lengthscale,
        "observation_noise": float(fit.observation_noise),
        "fit_seconds": fit.fit_seconds,
    }
    if fit.kind == "cob":
        out.update(
            sigma2=fit.sigma2,
            lam=fit.lam,
            n_biased=int((fit.delta != 0).sum()),
            lambda_trace=list(fit.lambda_trace),
        )
    elif fit.kind == "rab":
        out.update(mu=fit.mu, lambdas=list(fit.lambdas))
    else:
        out.update(sigma2=fit.sigma2, nll=fit.nll)
    if fit.kind != "plain":
        out.update(
            objective_trace=list(fit.objective_trace),
            converged=fit.converged,
            n_outer=fit.n_outer,
            warnings=list(fit.warnings),
        )
    return out
