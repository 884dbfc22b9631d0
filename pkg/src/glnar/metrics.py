"""Forecast verification: RMSE, CRPS, Brier curves, reliability, marginal
calibration and improvement tables.

Scores are computed as fractions of nominal power; :class:`EvaluationReport`
also exposes them in percent for tables.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import binom

from .data import format_timestamp, parse_timestamp
from .errors import DataError, EvaluationError
from .predictive import GridPredictive, as_levels, from_params, trapezoid

CRPS_GRID = np.linspace(0.0, 1.0, 1001)
STANDARD_LEVELS = np.array(
    [0.025, 0.05, 0.1, 0.125, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.875, 0.9, 0.95, 0.975]
)
CALIBRATION_GRID = np.linspace(0.0, 1.0, 101)
MONOTONE_TOL = 1e-9
CHUNK = 1024


def _obs(observations):
    x = np.asarray(observations, dtype=float)
    if x.ndim != 1:
        raise EvaluationError("observations must be a 1-D array")
    return x


def rmse(points, observations):
    """Root mean squared error of point forecasts (fraction of nominal power)."""
    pt = np.asarray(points, dtype=float)
    x = _obs(observations)
    if x.size == 0:
        raise EvaluationError("cannot score an empty archive")
    if pt.shape != x.shape:
        raise EvaluationError("point forecasts and observations differ in length")
    return float(np.sqrt(np.mean((pt - x) ** 2)))


def _crps_chunk(pred, x, grid, offset, labels):
    T = x.size
    atoms = pred.atoms()
    if atoms is None:
        # merge the observation into the sorted grid without a full sort
        j = np.searchsorted(grid, x)[:, None]
        col = np.arange(grid.size + 1)[None, :]
        knots = np.where(col < j, grid[np.minimum(col, grid.size - 1)],
                         np.where(col == j, x[:, None], grid[np.maximum(col - 1, 0)]))
    else:
        parts = [np.broadcast_to(grid, (T, grid.size)), x[:, None], np.clip(atoms, 0.0, 1.0)]
        knots = np.sort(np.concatenate(parts, axis=1), axis=1)
    right = pred.cdf(knots)
    if pred.discrete:
        left = pred.cdf_left(knots)
    else:
        # continuous inside (0, 1): only the jump at 1 (mass at the bound) matters
        left = right.copy()
        left[:, -1:] = pred.cdf_left(knots[:, -1:])
    # F(y-) <= F(y) and both non-decreasing along the knots
    bad = (np.diff(right, axis=1) < -MONOTONE_TOL).any(axis=1) | (left > right + MONOTONE_TOL).any(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0]) + offset
        where = f" ({labels[i]})" if labels is not None else ""
        raise EvaluationError(f"predictive CDF of record {i}{where} is not non-decreasing")
    a, b = knots[:, :-1], knots[:, 1:]
    step = (a >= x[:, None]).astype(float)  # 1(y >= x) on (a, b)
    fa = right[:, :-1] - step
    fb = left[:, 1:] - step
    return np.sum(0.5 * (b - a) * (fa * fa + fb * fb), axis=1)


def crps_records(pred, observations, grid=CRPS_GRID, labels=None, chunk=CHUNK):
    """Per-record CRPS, integrating {F(y) - 1(y >= x)}^2 over [0, 1].

    Trapezoidal rule on ``grid`` refined with the observation and any jump
    locations of the predictive, using one-sided limits at the knots, so the
    indicator and point masses are integrated exactly.
    """
    x = _obs(observations)
    if len(pred) != x.size:
        raise EvaluationError("predictive and observations differ in length")
    if np.any((x < 0) | (x > 1)):
        raise EvaluationError("observations must lie in [0, 1]")
    out = np.empty(x.size)
    for s in range(0, x.size, chunk):
        idx = np.arange(s, min(s + chunk, x.size))
        out[idx] = _crps_chunk(pred.take(idx), x[idx], grid, s, labels)
    return out


def crps(pred, observations, grid=CRPS_GRID, labels=None):
    """Mean CRPS (fraction of nominal power)."""
    x = _obs(observations)
    if x.size == 0:
        raise EvaluationError("cannot score an empty archive")
    return float(np.mean(crps_records(pred, x, grid, labels)))


def gaussian_crps(mu, sigma, x):
    """Closed-form CRPS of N(mu, sigma^2) on the real line."""
    from scipy.special import ndtr

    z = (np.asarray(x) - mu) / sigma
    pdf = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    return sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * pdf - 1.0 / np.sqrt(np.pi))


def brier_curve(pred, observations, thresholds=CRPS_GRID, chunk=CHUNK):
    """BS(y) = mean_t {F_t(y) - 1(x_t <= y)}^2 for each threshold y."""
    x = _obs(observations)
    y = np.asarray(thresholds, dtype=float)
    acc = np.zeros(y.size)
    for s in range(0, x.size, chunk):
        idx = np.arange(s, min(s + chunk, x.size))
        F = pred.take(idx).cdf(y)
        acc += np.sum((F - (x[idx, None] <= y[None, :])) ** 2, axis=0)
    return acc / max(x.size, 1)


def binomial_band(levels, n, coverage=0.99):
    """Central ``coverage`` band for an empirical frequency of n Bernoulli(tau) draws."""
    levels = np.asarray(levels, dtype=float)
    a = (1.0 - coverage) / 2.0
    lo = binom.ppf(a, n, levels) / n
    hi = binom.ppf(1.0 - a, n, levels) / n
    return lo, hi


def reliability(quantiles, observations, levels=STANDARD_LEVELS, coverage=0.99):
    """Empirical frequency of ``x_t <= q_t(tau)`` per nominal level, with a binomial band.

    Returns a dict of arrays ``nominal, empirical, lower, upper``.
    """
    q = np.atleast_2d(np.asarray(quantiles, dtype=float))
    x = _obs(observations)
    levels = as_levels(levels)
    if q.shape != (x.size, levels.size):
        raise EvaluationError("quantile matrix must be (records, levels)")
    emp = np.mean(x[:, None] <= q, axis=0)
    lo, hi = binomial_band(levels, x.size, coverage)
    return {"nominal": levels.copy(), "empirical": emp, "lower": lo, "upper": hi}


def mean_cdf(pred, grid, chunk=CHUNK):
    acc = np.zeros(np.size(grid))
    n = len(pred)
    for s in range(0, n, chunk):
        acc += pred.take(np.arange(s, min(s + chunk, n))).cdf(grid).sum(axis=0)
    return acc / max(n, 1)


def marginal_calibration(pred, observations, grid=CALIBRATION_GRID):
    """Average predictive CDF minus the empirical CDF of the observations."""
    grid = np.asarray(grid, dtype=float)
    x = _obs(observations)
    if x.size == 0:
        raise EvaluationError("cannot score an empty archive")
    if grid.size == 0:
        return {"value": grid, "difference": grid.copy()}
    emp = np.mean(x[:, None] <= grid[None, :], axis=0)
    return {"value": grid, "difference": mean_cdf(pred, grid) - emp}


def improvement(model, baseline):
    if baseline == 0:
        raise EvaluationError("baseline score is zero; improvement undefined")
    return 100.0 * (baseline - model) / baseline


def improvement_table(reports, baselines, metrics=("rmse", "crps")):
    """``{model: {metric: {baseline: percent}}}`` relative improvements."""
    reports = {r.model_id: r for r in reports} if not isinstance(reports, dict) else reports
    missing = [b for b in baselines if b not in reports]
    if missing:
        raise EvaluationError(f"baseline report(s) missing: {', '.join(missing)}")
    table = {}
    for mid, rep in reports.items():
        row = {}
        for m in metrics:
            v = getattr(rep, m)
            if v is None:
                continue
            row[m] = {
                b: improvement(v, getattr(reports[b], m))
                for b in baselines
                if getattr(reports[b], m) is not None
            }
        table[mid] = row
    return table


# ---- archives ---------------------------------------------------------------


@dataclass
class ForecastArchive:
    """One model's one-step forecasts over a period.

    ``predictive`` is the live distribution object. Archives written to disk
    keep the CDF tabulated on ``cdf_grid`` plus the predictive's parameters,
    so reading one back restores the exact distribution; without parameters
    the tabulated CDF (linear in between) stands in for it.
    """

    model_id: str
    timestamps: np.ndarray
    observations: np.ndarray
    points: np.ndarray
    levels: np.ndarray
    quantiles: np.ndarray
    predictive: object = None
    crps_values: np.ndarray | None = None
    cdf_grid: np.ndarray = field(default_factory=lambda: CALIBRATION_GRID.copy())
    cdf_values: np.ndarray | None = None

    def __post_init__(self):
        n = np.size(self.observations)
        self.timestamps = np.asarray(self.timestamps).astype("datetime64[s]")
        self.observations = np.asarray(self.observations, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        self.levels = np.asarray(self.levels, dtype=float)
        self.quantiles = np.asarray(self.quantiles, dtype=float).reshape(n, self.levels.size)
        if self.timestamps.shape != (n,) or self.points.shape != (n,):
            raise EvaluationError(f"archive {self.model_id!r}: column lengths differ")
        if n and np.any(np.diff(self.timestamps) <= np.timedelta64(0, "s")):
            raise EvaluationError(f"archive {self.model_id!r}: timestamps not increasing")

    def __len__(self):
        return self.observations.size

    @classmethod
    def from_predictive(cls, model_id, timestamps, observations, pred, point_rule="median",
                        levels=STANDARD_LEVELS, points=None):
        obs = _obs(observations)
        q = pred.quantile(np.asarray(levels))
        pts = np.asarray(pred.point(point_rule) if points is None else points, dtype=float)
        labels = [format_timestamp(t) for t in np.asarray(timestamps)]
        cr = crps_records(pred, obs, labels=labels)
        return cls(model_id, timestamps, obs, np.broadcast_to(pts, obs.shape), levels, q, pred, cr)

    def distribution(self):
        if self.predictive is not None:
            return self.predictive
        if self.cdf_values is None:
            raise EvaluationError(f"archive {self.model_id!r} has no predictive CDF")
        return GridPredictive(self.cdf_grid, self.cdf_values)

    def rmse(self):
        return rmse(self.points, self.observations)

    def crps(self):
        if self.crps_values is None:
            self.crps_values = crps_records(self.distribution(), self.observations)
        if self.crps_values.size == 0:
            raise EvaluationError("cannot score an empty archive")
        return float(np.mean(self.crps_values))

    def quantile_at(self, tau):
        j = np.flatnonzero(np.isclose(self.levels, tau))
        if j.size == 0:
            raise EvaluationError(f"archive has no quantile at level {tau}")
        return self.quantiles[:, j[0]]

    # -- files

    def write(self, path):
        """CSV of records plus a companion ``.npz`` holding the tabulated CDF."""
        path = Path(path)
        cols = ["timestamp", "observation", "point", "crps"] + [f"q_{t:g}" for t in self.levels]
        crv = self.crps_values if self.crps_values is not None else np.full(len(self), np.nan)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["# model", self.model_id])
            w.writerow(cols)
            for i in range(len(self)):
                w.writerow(
                    [format_timestamp(self.timestamps[i])]
                    + [repr(float(v)) for v in (self.observations[i], self.points[i], crv[i])]
                    + [repr(float(v)) for v in self.quantiles[i]]
                )
        cdf = self.cdf_values
        if cdf is None:
            cdf = tabulate_cdf(self.distribution(), self.cdf_grid)
        extra = {}
        pred = self.predictive
        if pred is not None and pred.kind is not None:
            extra = {"kind": np.array(pred.kind), **{f"param_{k}": v for k, v in pred.params().items()}}
        np.savez_compressed(path.with_suffix(".npz"), grid=self.cdf_grid, cdf=cdf, levels=self.levels, **extra)
        return path

    @classmethod
    def read(cls, path):
        path = Path(path)
        if not path.exists():
            raise DataError(f"no such archive: {path}")
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2 or rows[0][0] != "# model":
            raise DataError(f"{path}: not a forecast archive")
        model_id = rows[0][1]
        header = rows[1]
        levels = np.array([float(h[2:]) for h in header[4:]])
        body = rows[2:]
        try:
            ts = np.array([parse_timestamp(r[0]) for r in body], dtype="datetime64[s]")
            num = np.array([[float(v) for v in r[1:]] for r in body], dtype=float).reshape(len(body), -1)
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}: malformed archive row ({exc})") from None
        comp = path.with_suffix(".npz")
        grid, cdf, pred = CALIBRATION_GRID.copy(), None, None
        if comp.exists():
            from . import benchmarks, gln  # noqa: F401  (register predictive kinds)

            with np.load(comp) as z:
                grid, cdf = z["grid"], z["cdf"]
                if "kind" in z:
                    params = {k[6:]: z[k] for k in z.files if k.startswith("param_")}
                    pred = from_params(str(z["kind"]), params)
        crv = num[:, 2] if not np.all(np.isnan(num[:, 2])) else None
        return cls(model_id, ts, num[:, 0], num[:, 1], levels, num[:, 3:], pred, crv, grid, cdf)


def tabulate_cdf(pred, grid, chunk=CHUNK):
    """Tabulate right-continuous CDFs of every record on ``grid``."""
    n = len(pred)
    out = np.empty((n, np.size(grid)))
    for s in range(0, n, chunk):
        idx = np.arange(s, min(s + chunk, n))
        out[idx] = pred.take(idx).cdf(grid)
    return out


# ---- reports ----------------------------------------------------------------


@dataclass
class EvaluationReport:
    model_id: str
    n: int
    rmse: float | None
    crps: float | None
    brier_thresholds: np.ndarray
    brier: np.ndarray
    reliability: dict
    marginal: dict
    improvements: dict = field(default_factory=dict)

    @property
    def brier_integral(self):
        return float(trapezoid(self.brier, self.brier_thresholds))

    def to_dict(self):
        pct = lambda v: None if v is None else 100.0 * v
        return {
            "model": self.model_id,
            "n": self.n,
            "rmse": self.rmse,
            "crps": self.crps,
            "rmse_pct": pct(self.rmse),
            "crps_pct": pct(self.crps),
            "brier_integral": self.brier_integral,
            "improvements_pct": self.improvements,
        }


def evaluate_archive(archive, brier_thresholds=CRPS_GRID, calibration_grid=CALIBRATION_GRID):
    if len(archive) == 0:
        raise EvaluationError(f"archive {archive.model_id!r} is empty")
    pred = archive.distribution()
    x = archive.observations
    return EvaluationReport(
        model_id=archive.model_id,
        n=len(archive),
        rmse=archive.rmse(),
        crps=archive.crps(),
        brier_thresholds=np.asarray(brier_thresholds, dtype=float),
        brier=brier_curve(pred, x, brier_thresholds),
        reliability=reliability(archive.quantiles, x, archive.levels),
        marginal=marginal_calibration(pred, x, calibration_grid),
    )


def attach_improvements(reports, baselines):
    present = [b for b in baselines if any(r.model_id == b for r in reports)]
    table = improvement_table(reports, present) if present else {}
    for r in reports:
        r.improvements = table.get(r.model_id, {})
    return table


def write_report_json(reports, path):
    with open(path, "w") as fh:
        json.dump({"models": [r.to_dict() for r in reports]}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else repr(float(v)) for v in r])


def write_plot_csvs(reports, archives, out_dir):
    """brier_curve.csv, reliability.csv, marginal_calibration.csv and intervals.csv (long format)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for r in reports:
        rows += [[r.model_id, y, b] for y, b in zip(r.brier_thresholds, r.brier)]
    _write_rows(out / "brier_curve.csv", ["model", "threshold", "brier"], rows)
    rows = []
    for r in reports:
        rel = r.reliability
        rows += [[r.model_id, *v] for v in zip(rel["nominal"], rel["empirical"], rel["lower"], rel["upper"])]
    _write_rows(out / "reliability.csv", ["model", "nominal", "empirical", "band_lower", "band_upper"], rows)
    rows = []
    for r in reports:
        rows += [[r.model_id, y, d] for y, d in zip(r.marginal["value"], r.marginal["difference"])]
    _write_rows(out / "marginal_calibration.csv", ["model", "value", "difference"], rows)
    rows = []
    for a in archives:
        try:
            cols = [a.quantile_at(t) for t in (0.025, 0.125, 0.875, 0.975)]
        except EvaluationError:
            continue
        for i in range(len(a)):
            rows.append([a.model_id, format_timestamp(a.timestamps[i]), a.observations[i], a.points[i]]
                        + [c[i] for c in cols])
    _write_rows(
        out / "intervals.csv",
        ["model", "timestamp", "observation", "point", "q_0.025", "q_0.125", "q_0.875", "q_0.975"],
        rows,
    )
    return out
