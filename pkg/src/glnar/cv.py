"""Expanding-window cross-validation over hyperparameter grids.

Each grid cell is fitted on the data before the validation period and then
rolled through it, with the training window growing by one record per
step: batch models are refitted (every step for short series, every
``REFIT_STRIDE`` steps otherwise) and recursive models simply keep
updating. The cell with the smallest RMSE (point mode) or CRPS
(probabilistic mode) wins; ties go to the smaller p, then the larger alpha,
then the larger delta.
"""
from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .batch import fit_batch
from .benchmarks import nar_fit
from .data import coarsen
from .errors import ConfigError, EstimationError, EvaluationError, GlnarError
from .forecast import BATCH_MODELS, MODEL_PARAMS, ModelSpec, model_forecasts, period_targets
from .metrics import crps, rmse
from .recursive import RecursiveConfig, run_series

EXACT_REFIT_MAX = 5000
REFIT_STRIDE = 50

DEFAULT_P = tuple(range(1, 6))
DEFAULT_DELTA = tuple(round(0.002 + 0.001 * k, 3) for k in range(9))
# log-spaced in 1 - alpha between 0.02 and 0.0002
DEFAULT_ALPHA = tuple(float(1.0 - v) for v in np.round(np.geomspace(0.02, 0.0002, 11), 6))


@dataclass
class Grid:
    p_values: tuple = DEFAULT_P
    delta_values: tuple = DEFAULT_DELTA
    alpha_values: tuple = DEFAULT_ALPHA
    metric: str = "crps"

    def __post_init__(self):
        self.p_values = tuple(int(v) for v in self.p_values)
        self.delta_values = tuple(float(v) for v in self.delta_values)
        self.alpha_values = tuple(float(v) for v in self.alpha_values)
        if not (self.p_values and self.delta_values and self.alpha_values):
            raise ConfigError("every grid dimension needs at least one value")
        if any(p < 1 for p in self.p_values):
            raise ConfigError("grid lag orders must be >= 1")
        if any(not 0.0 < a < 1.0 for a in self.alpha_values):
            raise ConfigError("grid alphas must lie in (0, 1)")
        if any(not 0.0 < d < 0.5 for d in self.delta_values):
            raise ConfigError("grid deltas must lie in (0, 0.5)")
        if self.metric not in ("rmse", "crps"):
            raise ConfigError(f"metric must be 'rmse' or 'crps', got {self.metric!r}")

    def cells(self, model):
        """Model specs spanning the dimensions the model uses, in grid order."""
        need = MODEL_PARAMS[model]
        ps = self.p_values if "p" in need else (2,)
        ds = self.delta_values if "delta" in need else (None,)
        al = self.alpha_values if "alpha" in need else (None,)
        return [ModelSpec(model, p, a, d) for p, d, a in itertools.product(ps, ds, al)]

    def max_p(self, models):
        return max((max(self.p_values) if "p" in MODEL_PARAMS[m] else 1) for m in models)


def tie_key(cell):
    """Order used to break metric ties: smaller p, larger alpha, larger delta."""
    spec = cell["spec"]
    return (
        spec.p if "p" in MODEL_PARAMS[spec.name] else 0,
        -(spec.alpha or 0.0),
        -(spec.delta or 0.0),
    )


def refit_stride(n_total, exact=None):
    if exact is True:
        return 1
    if exact is False:
        return REFIT_STRIDE
    return 1 if n_total <= EXACT_REFIT_MAX else REFIT_STRIDE


def expanding_window_eval(series, spec, targets, metric, point_rule="median", refit_every=None):
    """Metric of ``spec`` over the validation ``targets`` (fractions, not percent)."""
    if spec.name in BATCH_MODELS and refit_every is None:
        refit_every = refit_stride(int(targets.max()) + 1)
    pred, info = model_forecasts(spec, series, targets, refit_every)
    obs = series.values[targets]
    if metric == "rmse":
        value = rmse(np.atleast_1d(pred.point(point_rule)), obs)
    else:
        value = crps(pred, obs)
    diag = {}
    if "fits" in info:
        diag["n_fits"] = len(info["fits"])
        diag["converged"] = bool(all(f.get("converged", True) for f in info["fits"]))
    if "run" in info:
        diag["n_skipped"] = int(info["run"].n_skipped)
        diag["n_at_bounds"] = info["run"].n_at_bounds
    return value, diag


def _eval_cell(args):
    series, spec, targets, metric, point_rule, refit_every = args
    try:
        value, diag = expanding_window_eval(series, spec, targets, metric, point_rule, refit_every)
        if not math.isfinite(value):
            raise EvaluationError("non-finite metric")
        return {"spec": spec, "metric": value, "status": "ok", "diagnostics": diag}
    except (GlnarError, ValueError, np.linalg.LinAlgError) as exc:
        return {"spec": spec, "metric": None, "status": "failed", "error": str(exc), "diagnostics": {}}


@dataclass
class CvResult:
    model: str
    metric: str
    cells: list
    selected: dict | None = None
    n_targets: int = 0
    refit_every: int | None = None

    def table(self):
        return [
            {
                **c["spec"].params(),
                "metric": c["metric"],
                "status": c["status"],
                **({"error": c["error"]} if "error" in c else {}),
                "diagnostics": c["diagnostics"],
            }
            for c in self.cells
        ]

    def to_dict(self):
        return {
            "model": self.model,
            "metric": self.metric,
            "n_targets": self.n_targets,
            "refit_every": self.refit_every,
            "selected": None if self.selected is None else self.selected["spec"].params(),
            "selected_metric": None if self.selected is None else self.selected["metric"],
            "cells": self.table(),
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def choose(cells):
    """Best successful cell (metric, then the tie-break order)."""
    ok = [c for c in cells if c["status"] == "ok"]
    if not ok:
        raise EstimationError("every grid cell failed; nothing to select")
    return min(ok, key=lambda c: (c["metric"], *tie_key(c)))


def cross_validate(series, model, grid, cv_start, cv_stop, point_rule="median", n_jobs=1,
                   p_max=None, exact_refit=None):
    """Evaluate every cell of ``grid`` for ``model`` on targets in [cv_start, cv_stop).

    All cells are scored on the same targets (those with ``p_max`` contiguous
    lags, by default the largest p in the grid).
    """
    p_max = p_max or grid.max_p([model])
    targets = period_targets(series, cv_start, cv_stop, p_max)
    if targets.size == 0:
        raise ConfigError("validation period has no usable targets")
    refit = refit_stride(cv_stop, exact_refit) if model in BATCH_MODELS else None
    jobs = [(series, spec, targets, grid.metric, point_rule, refit) for spec in grid.cells(model)]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            cells = list(ex.map(_eval_cell, jobs))
    else:
        cells = [_eval_cell(j) for j in jobs]
    result = CvResult(model, grid.metric, cells, n_targets=int(targets.size), refit_every=refit)
    result.selected = choose(cells)
    return result


@dataclass
class FinalModel:
    """Model refitted on the whole train + validation history."""

    spec: ModelSpec
    fit: object = None  # BatchFit, NarState or RecursiveState
    extra: dict = field(default_factory=dict)


def select(result, history):
    """Selected spec plus its refit on ``history`` (train + validation)."""
    spec = result.selected["spec"] if result.selected else choose(result.cells)["spec"]
    if spec.name == "glnar_batch":
        return FinalModel(spec, fit_batch(coarsen(history, spec.delta), spec.p))
    if spec.name == "nar_batch":
        return FinalModel(spec, nar_fit(history, spec.p, "batch"))
    if spec.name == "nar_recursive":
        state, _ = nar_fit(history, spec.p, "recursive", spec.alpha)
        return FinalModel(spec, state)
    if spec.name == "glnar_recursive":
        cfg = RecursiveConfig(p=spec.p, alpha=spec.alpha, delta=spec.delta)
        run = run_series(coarsen(history, spec.delta), cfg)
        return FinalModel(spec, run.state)
    return FinalModel(spec)
