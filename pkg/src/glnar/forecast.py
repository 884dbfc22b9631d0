"""Rolling one-step forecasts for every model over a period of a series.

A period is given by target indices into the full (raw, aggregated) series.
Each forecast only uses data before its target: batch models are fitted on
the history before the period (or refitted along an expanding window),
recursive models run continuously from the start of the series.
GLNAR models work on the coarsened series but are scored against the raw
observations.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import benchmarks as bm
from .batch import BatchOptions, fit_batch, predict_means
from .data import coarsen
from .errors import ConfigError, EstimationError
from .gln import GlnPredictive
from .metrics import STANDARD_LEVELS, ForecastArchive
from .recursive import RecursiveConfig, run_series

MODELS = (
    "persistence",
    "prob_persistence",
    "climatology",
    "nar_batch",
    "nar_recursive",
    "glnar_batch",
    "glnar_recursive",
)
BATCH_MODELS = ("nar_batch", "glnar_batch")
# hyperparameters each model actually uses
MODEL_PARAMS = {
    "persistence": (),
    "prob_persistence": (),
    "climatology": (),
    "nar_batch": ("p",),
    "nar_recursive": ("p", "alpha"),
    "glnar_batch": ("p", "delta"),
    "glnar_recursive": ("p", "alpha", "delta"),
}


@dataclass(frozen=True)
class ModelSpec:
    name: str
    p: int = 2
    alpha: float | None = None
    delta: float | None = None

    def __post_init__(self):
        if self.name not in MODELS:
            raise ConfigError(f"unknown model {self.name!r}; choose from {', '.join(MODELS)}")
        need = MODEL_PARAMS[self.name]
        if "p" in need and self.p < 1:
            raise ConfigError(f"{self.name}: lag order p must be >= 1")
        if "alpha" in need and (self.alpha is None or not 0.0 < self.alpha < 1.0):
            raise ConfigError(f"{self.name}: forgetting factor alpha must lie in (0, 1)")
        if "delta" in need and (self.delta is None or not 0.0 < self.delta < 0.5):
            raise ConfigError(f"{self.name}: coarsening delta must lie in (0, 0.5)")

    @property
    def lags(self):
        return self.p if "p" in MODEL_PARAMS[self.name] else 1

    def params(self):
        return {k: v for k, v in asdict(self).items() if k == "name" or k in MODEL_PARAMS[self.name]}

    def label(self):
        return self.name


def period_targets(series, start, stop, p_max=1):
    """Indices in [start, stop) whose ``p_max`` previous records are contiguous."""
    ok = series.lag_ok(p_max) & ~np.isnan(series.values)
    idx = np.arange(start, stop)
    return idx[ok[start:stop]]


def _refit_points(targets, refit_every):
    """Indices into ``targets`` where a batch model is (re)fitted."""
    if refit_every is None:
        return np.array([0])
    return np.arange(0, targets.size, refit_every)


def _batch_forecasts(model, series, targets, refit_every, options=None):
    """Batch model fitted on all data before the first target of each block."""
    x_raw = series.values
    preds = []
    info = []
    nu0 = 1.0
    starts = _refit_points(targets, refit_every)
    bounds = list(starts) + [targets.size]
    for a, b in zip(bounds[:-1], bounds[1:]):
        block = targets[a:b]
        history = series[: block[0]]
        if model.name == "nar_batch":
            state = bm.nar_fit(history, model.p, "batch")
            preds.append((state.phi @ x_raw[block[:, None] - np.arange(1, model.p + 1)].T, state.sigma2))
            info.append(state.to_dict())
        else:
            hc = coarsen(history, model.delta)
            opt = options or BatchOptions()
            opt = BatchOptions(**{**asdict(opt), "nu0": nu0})
            fit = fit_batch(hc, model.p, opt)
            nu0 = fit.theta.nu
            xc = coarsen(x_raw, model.delta)
            mu = predict_means(fit.theta, xc, block)
            preds.append((mu, fit.theta.sigma2, fit.theta.nu))
            info.append(fit.to_dict())
    if model.name == "nar_batch":
        mean = np.concatenate([m for m, _ in preds])
        s2 = np.concatenate([np.full(m.size, s) for m, s in preds])
        return bm.GaussianPredictive(mean, s2), info
    mu = np.concatenate([m for m, _, _ in preds])
    s2 = np.concatenate([np.full(m.size, s) for m, s, _ in preds])
    nu = np.concatenate([np.full(m.size, v) for m, _, v in preds])
    return GlnPredictive(mu, s2, nu, model.delta), info


def model_forecasts(model, series, targets, refit_every=None, backend=None, batch_options=None):
    """One-step predictive distributions of ``model`` for each target index.

    Returns ``(predictive, info)`` where ``info`` holds fit diagnostics
    (batch fits, final recursive state) for the caller to record.
    """
    targets = np.asarray(targets)
    if targets.size == 0:
        raise EstimationError("no forecast targets in the period")
    if targets.min() < model.lags:
        raise EstimationError("first target has no lag history")
    name = model.name
    if name == "persistence":
        return bm.persistence_forecasts(series, targets), {}
    if name == "prob_persistence":
        return bm.prob_persistence_forecasts(series, targets), {}
    if name == "climatology":
        return bm.climatology_forecasts(series, targets), {}
    if name in BATCH_MODELS:
        pred, fits = _batch_forecasts(model, series, targets, refit_every, batch_options)
        return pred, {"fits": fits}
    end = int(targets.max())
    if name == "nar_recursive":
        pred, traj = bm.nar_recursive_forecasts(series[:end], targets, model.p, model.alpha, backend=backend)
        return pred, {"final": traj.state.to_dict()}
    if name == "glnar_recursive":
        cfg = RecursiveConfig(p=model.p, alpha=model.alpha, delta=model.delta)
        run = run_series(coarsen(series[:end], model.delta), cfg, backend=backend)
        return run.predictive_for(targets), {"run": run}
    raise ConfigError(f"unknown model {name!r}")  # pragma: no cover


def model_archive(model, series, targets, point_rule="median", refit_every=None, backend=None,
                  levels=STANDARD_LEVELS, model_id=None):
    pred, info = model_forecasts(model, series, targets, refit_every, backend)
    arch = ForecastArchive.from_predictive(
        model_id or model.label(),
        series.timestamps[targets],
        series.values[targets],
        pred,
        point_rule,
        levels,
    )
    return arch, info
