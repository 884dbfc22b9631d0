"""Reference forecasters: persistence, probabilistic persistence,
climatology and Gaussian autoregressions (batch and recursive) on raw values.

The rolling helpers (``*_forecasts``) take a full series and an array of
target indices and return one predictive per target, built only from data
strictly before that target.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from . import kernels
from .data import PowerSeries
from .errors import EstimationError
from .predictive import PointMassPredictive, Predictive, as_levels, register, trapezoid

CLIMATOLOGY_LEVELS = np.linspace(0.0, 1.0, 101)
PERSISTENCE_MEMBERS = 20


def _row_search(sorted_rows, y, side):
    """Per-row ``searchsorted`` for row-sorted values in [0, 1].

    Rows are shifted by 2 * row index so one flat search serves all of them.
    """
    T, K = sorted_rows.shape
    off = 2.0 * np.arange(T)[:, None]
    flat = (sorted_rows + off).ravel()
    yy = np.clip(np.broadcast_to(y, (T, np.shape(y)[-1])), -0.5, 1.5) + off
    return np.searchsorted(flat, yy, side=side) - K * np.arange(T)[:, None]


@register("empirical")
class EmpiricalPredictive(Predictive):
    """Weighted ensemble on [0, 1] (equal weights unless given)."""

    discrete = True

    def __init__(self, members, weights=None):
        members = np.atleast_2d(np.asarray(members, dtype=float))
        order = np.argsort(members, axis=1, kind="stable")
        self.members = np.take_along_axis(members, order, axis=1)
        if weights is None:
            w = np.full(self.members.shape, 1.0 / self.members.shape[1])
        else:
            w = np.broadcast_to(np.asarray(weights, dtype=float), members.shape)
            if np.any(w < 0):
                raise ValueError("ensemble weights must be non-negative")
            w = np.take_along_axis(w, order, axis=1)
            w = w / w.sum(axis=1, keepdims=True)
        self.weights = w
        self._cum = np.concatenate([np.zeros((len(self), 1)), np.cumsum(w, axis=1)], axis=1)
        self._cum[:, -1] = 1.0

    def __len__(self):
        return self.members.shape[0]

    def params(self):
        return {"members": self.members, "weights": self.weights}

    def _lookup(self, y, side):
        k = _row_search(self.members, y, side)
        return np.take_along_axis(self._cum, k, axis=1)

    def _cdf_inner(self, y):
        return self._lookup(y, "right")

    def _cdf_left_inner(self, y):
        return self._lookup(y, "left")

    def atoms(self):
        return self.members

    def quantile(self, tau):
        # smallest member whose cumulative weight reaches tau
        tau = as_levels(tau)
        levels = np.atleast_1d(tau)
        cw = self._cum[:, 1:]
        k = np.empty((len(self), levels.size), dtype=np.intp)
        for j, t in enumerate(levels):
            k[:, j] = np.argmax(cw >= t - 1e-12, axis=1)
        q = np.take_along_axis(self.members, k, axis=1)
        return q[:, 0] if tau.ndim == 0 else q

    def mean(self):
        return np.sum(self.members * self.weights, axis=1)

    def take(self, idx):
        return EmpiricalPredictive(self.members[idx], self.weights[idx])


@register("quantile_table")
class QuantileTablePredictive(Predictive):
    """Quantiles on a fixed probability grid (including 0 and 1), linear in between.

    Repeated quantile values produce a jump in the CDF, so data with point
    masses (e.g. many exact zeros) are represented faithfully.
    """

    discrete = True

    def __init__(self, levels, table):
        self.levels = np.asarray(levels, dtype=float)
        self.table = np.atleast_2d(np.asarray(table, dtype=float))
        if self.table.shape[1] != self.levels.size:
            raise ValueError("quantile table width does not match the level grid")
        if self.levels[0] != 0.0 or self.levels[-1] != 1.0:
            raise ValueError("level grid must start at 0 and end at 1")
        if np.any(np.diff(self.table, axis=1) < 0):
            raise ValueError("quantile table must be non-decreasing")

    def __len__(self):
        return self.table.shape[0]

    def params(self):
        return {"levels": self.levels, "table": self.table}

    def _interp(self, y, side):
        q, tau = self.table, self.levels
        K = tau.size
        y = np.broadcast_to(y, (len(self), np.shape(y)[-1]))
        k = _row_search(q, y, side)  # side=right: count of q <= y
        inside = (k > 0) & (k < K)
        kk = np.clip(k, 1, K - 1)
        q0 = np.take_along_axis(q, kk - 1, axis=1)
        q1 = np.take_along_axis(q, kk, axis=1)
        t0, t1 = tau[kk - 1], tau[kk]
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(q1 > q0, (y - q0) / (q1 - q0), 1.0)
        val = t0 + np.clip(w, 0.0, 1.0) * (t1 - t0)
        return np.where(inside, val, np.where(k >= K, 1.0, 0.0))

    def _cdf_inner(self, y):
        return self._interp(y, "right")

    def _cdf_left_inner(self, y):
        return self._interp(y, "left")

    def atoms(self):
        return self.table

    def quantile(self, tau):
        tau = as_levels(tau)
        levels = np.atleast_1d(tau)
        j = np.clip(np.searchsorted(self.levels, levels, side="right") - 1, 0, self.levels.size - 2)
        w = (levels - self.levels[j]) / (self.levels[j + 1] - self.levels[j])
        q = self.table[:, j] + w * (self.table[:, j + 1] - self.table[:, j])
        return q[:, 0] if tau.ndim == 0 else q

    def mean(self):
        return trapezoid(self.table, self.levels, axis=1)

    def take(self, idx):
        return QuantileTablePredictive(self.levels, self.table[idx])


@register("gaussian")
class GaussianPredictive(Predictive):
    """N(mean, sigma2) evaluated on [0, 1] without renormalization.

    The mass below 0 shows up as a jump of the CDF at 0 and the mass above 1
    as a jump at 1, i.e. the law of the clipped variable. Records with
    ``sigma2 == 0`` are point masses.
    """

    def __init__(self, mean, sigma2):
        self.loc = np.atleast_1d(np.asarray(mean, dtype=float))
        self.sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), self.loc.shape).copy()
        if np.any(self.sigma2 < 0):
            raise ValueError("sigma2 must be non-negative")
        self.discrete = bool(np.any(self.sigma2 == 0))

    def __len__(self):
        return self.loc.shape[0]

    def params(self):
        return {"mean": self.loc, "sigma2": self.sigma2}

    @property
    def sigma(self):
        return np.sqrt(self.sigma2)

    def _cdf(self, y, strict):
        s = self.sigma[:, None]
        m = self.loc[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = ndtr((y - m) / s)
        step = (m < y) if strict else (m <= y)
        return np.where(s > 0, z, step.astype(float))

    def _cdf_inner(self, y):
        return self._cdf(y, False)

    def _cdf_left_inner(self, y):
        return self._cdf(y, True)

    def atoms(self):
        return np.clip(self.loc, 0.0, 1.0)[:, None] if self.discrete else None

    def quantile(self, tau):
        tau = as_levels(tau)
        if tau.ndim == 0:
            return np.clip(self.loc + self.sigma * ndtri(tau), 0.0, 1.0)
        z = ndtri(tau)[None, :]
        return np.clip(self.loc[:, None] + self.sigma[:, None] * z, 0.0, 1.0)

    def point(self, rule="median"):
        # truncated conditional mean; mean and median coincide before clipping
        if rule not in ("median", "mean"):
            raise ValueError(f"unknown point rule {rule!r}")
        return np.clip(self.loc, 0.0, 1.0)

    def mean(self):
        s = np.where(self.sigma > 0, self.sigma, 1.0)
        a = -self.loc / s
        b = (1.0 - self.loc) / s
        phi = lambda z: np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
        m = (
            self.loc * (ndtr(b) - ndtr(a))
            + self.sigma * (phi(a) - phi(b))
            + (1.0 - ndtr(b))
        )
        return np.where(self.sigma > 0, m, np.clip(self.loc, 0.0, 1.0))

    def take(self, idx):
        return GaussianPredictive(self.loc[idx], self.sigma2[idx])


# ---- benchmark forecasters ---------------------------------------------------


def persistence_point(x_t):
    return x_t


def persistence_prob(x_t, recent_errors, m=PERSISTENCE_MEMBERS):
    """Persistence dressed with the last ``m`` persistence errors.

    With fewer than ``m`` errors the forecast is a point mass at ``x_t``.
    """
    e = np.asarray(recent_errors, dtype=float)
    if e.size < m:
        return EmpiricalPredictive(np.full((1, 1), x_t))
    return EmpiricalPredictive(np.clip(x_t + e[-m:], 0.0, 1.0)[None, :])


def climatology(history, levels=CLIMATOLOGY_LEVELS):
    """Quantile table of all past observations (NaN ignored)."""
    h = np.asarray(history.values if isinstance(history, PowerSeries) else history, dtype=float)
    h = h[~np.isnan(h)]
    if h.size == 0:
        raise EstimationError("climatology needs a non-empty history")
    return QuantileTablePredictive(levels, np.quantile(h, levels)[None, :])


@dataclass
class NarState:
    phi: np.ndarray
    sigma2: float
    R: np.ndarray | None = None
    alpha: float | None = None

    def __post_init__(self):
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        if not self.sigma2 >= 0:
            raise EstimationError("NAR residual variance must be >= 0")

    @property
    def p(self):
        return self.phi.size

    def to_dict(self):
        d = {"phi": self.phi.tolist(), "sigma2": float(self.sigma2)}
        if self.alpha is not None:
            d["alpha"] = self.alpha
        return d


def _lag_rows(series, p):
    if isinstance(series, PowerSeries):
        return series.values, np.flatnonzero(series.lag_ok(p))
    x = np.asarray(series, dtype=float)
    return x, np.arange(p, x.size)


def nar_lstsq(x, rows, p):
    """Least squares AR(p) without intercept on raw values at target ``rows``."""
    if rows.size < p + 1:
        raise EstimationError(f"need at least p + 1 = {p + 1} usable rows for the NAR fit")
    Y = x[rows[:, None] - np.arange(1, p + 1)[None, :]]
    y = x[rows]
    gram = Y.T @ Y
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise EstimationError(f"NAR normal equations are singular (condition {cond:.3g})")
    phi = np.linalg.solve(gram, Y.T @ y)
    r = y - Y @ phi
    return NarState(phi, float(r @ r) / rows.size)


@dataclass
class NarTrajectory:
    phis: np.ndarray
    sigma2: np.ndarray
    mean_next: np.ndarray
    state: NarState


def rls_run(series, p, alpha, warmup=None, state=None, backend=None):
    """Forgetting-factor least squares over a series; returns the full trajectory."""
    x = series.values if isinstance(series, PowerSeries) else np.asarray(series, dtype=float)
    contiguous = (
        series.step_ok() if isinstance(series, PowerSeries)
        else np.concatenate([[False], np.ones(x.size - 1, dtype=bool)])
    )
    warmup = 100 + p if warmup is None else warmup
    phi = np.zeros(p)
    R = np.zeros((p, p))
    fn = kernels.get("rls_recursion", backend) if backend else kernels.rls_recursion
    sums = np.zeros(2)
    buf = np.zeros(p)
    ints = np.zeros(3, dtype=np.int64)
    phis, s2, mean_next = fn(np.ascontiguousarray(x), contiguous, alpha, warmup, phi, R, sums, buf, ints)
    last = NarState(phi, float(s2[-1]) if np.isfinite(s2[-1]) else 0.0, R, alpha)
    return NarTrajectory(phis, s2, mean_next, last)


def nar_fit(train, p, mode="batch", alpha=None):
    """Fit a Gaussian AR(p) on raw values.

    ``mode="batch"`` returns a :class:`NarState`; ``mode="recursive"`` returns
    ``(NarState, NarTrajectory)`` from forgetting-factor least squares.
    """
    x, rows = _lag_rows(train, p)
    if mode == "batch":
        return nar_lstsq(x, rows, p)
    if mode == "recursive":
        if alpha is None or not 0.0 < alpha < 1.0:
            raise EstimationError("recursive NAR needs a forgetting factor alpha in (0, 1)")
        if rows.size < p + 1:
            raise EstimationError(f"need at least p + 1 = {p + 1} usable rows for the NAR fit")
        traj = rls_run(train, p, alpha)
        return traj.state, traj
    raise ValueError(f"unknown NAR mode {mode!r}")


def nar_predict(state, lags):
    """Gaussian predictive for the next value; ``lags[0]`` is the most recent.

    Returns ``(predictive, point)`` with the point forecast clipped to [0, 1].
    """
    lags = np.atleast_2d(np.asarray(lags, dtype=float))
    mean = lags[:, : state.p] @ state.phi
    if state.sigma2 == 0:
        pred = PointMassPredictive(np.clip(mean, 0.0, 1.0))
    else:
        pred = GaussianPredictive(mean, state.sigma2)
    return pred, np.clip(mean, 0.0, 1.0)


# ---- rolling forecasts ------------------------------------------------------


def persistence_forecasts(series, targets):
    x = series.values
    return PointMassPredictive(x[np.asarray(targets) - 1])


def prob_persistence_forecasts(series, targets, m=PERSISTENCE_MEMBERS):
    """Ensembles from the last ``m`` contiguous persistence errors before each target.

    The error buffer runs over the whole series, so it carries across period
    boundaries.
    """
    x = series.values
    targets = np.asarray(targets)
    ok = series.step_ok()
    err_idx = np.flatnonzero(ok)
    errors = x[err_idx] - x[err_idx - 1]
    # errors observed at times <= t - 1
    k = np.searchsorted(err_idx, targets - 1, side="right")
    last = x[targets - 1]
    members = np.repeat(last[:, None], m, axis=1)
    full = k >= m
    if full.any():
        window = k[full][:, None] - m + np.arange(m)[None, :]
        members[full] = np.clip(last[full, None] + errors[window], 0.0, 1.0)
    return EmpiricalPredictive(members)


def climatology_forecasts(series, targets, levels=CLIMATOLOGY_LEVELS):
    """Quantile tables of all observations before each target, updated online.

    The targets must be increasing. Quantiles use linear interpolation
    between order statistics (``numpy.quantile``'s default).
    """
    x = series.values
    targets = np.asarray(targets)
    if targets.size and np.any(np.diff(targets) <= 0):
        raise ValueError("targets must be strictly increasing")
    hist = x[: targets[0]] if targets.size else x[:0]
    hist = np.sort(hist[~np.isnan(hist)])
    if hist.size == 0:
        raise EstimationError("climatology needs a non-empty history")
    buf = np.empty(hist.size + (targets[-1] - targets[0] if targets.size else 0) + 1)
    n = hist.size
    buf[:n] = hist
    table = np.empty((targets.size, levels.size))
    pos_frac = levels
    cursor = targets[0] if targets.size else 0
    for i, t in enumerate(targets):
        for v in x[cursor:t]:
            if np.isnan(v):
                continue
            j = np.searchsorted(buf[:n], v, side="right")
            buf[j + 1 : n + 1] = buf[j:n]
            buf[j] = v
            n += 1
        cursor = t
        pos = pos_frac * (n - 1)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, n - 1)
        frac = pos - lo
        table[i] = buf[lo] + frac * (buf[hi] - buf[lo])
    # guard against round-off making adjacent levels decrease
    table = np.maximum.accumulate(table, axis=1)
    return QuantileTablePredictive(levels, table)


def lag_matrix(series, targets, p):
    """``(T, p)`` matrix of lagged raw values, most recent first."""
    targets = np.asarray(targets)
    return series.values[targets[:, None] - np.arange(1, p + 1)[None, :]]


def nar_batch_forecasts(state, series, targets):
    pred, _ = nar_predict(state, lag_matrix(series, targets, state.p))
    return pred


def nar_recursive_forecasts(series, targets, p, alpha, warmup=None, backend=None):
    """One-step forecasts from forgetting-factor least squares run over ``series``."""
    traj = rls_run(series, p, alpha, warmup, backend=backend)
    origin = np.asarray(targets) - 1
    mean = traj.mean_next[origin]
    s2 = traj.sigma2[origin]
    if np.any(~np.isfinite(mean)) or np.any(~np.isfinite(s2)):
        raise EstimationError("recursive NAR has no forecast for some targets (warm-up or gap)")
    return GaussianPredictive(mean, s2), traj
