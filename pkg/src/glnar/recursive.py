"""Online maximum likelihood for GLN-AR(p) with exponential forgetting.

Each new observation contributes its log-likelihood gradient ``h`` (taken at
the previous estimate). The information matrix and the parameters follow

    R_t = alpha R_{t-1} + (1 - alpha) h h'
    theta_t = theta_{t-1} + (1 - alpha) R_t^{-1} h

with the parameter update frozen during a warm-up period while ``R``
accumulates. Parameters are ordered ``(phi_1..phi_p, sigma2, nu)``.

Started from ``R_0 = 0``, ``R_t`` is a partial sum whose weight
``1 - alpha**k`` is far below one for the first ~n_alpha steps, and the raw
update then overshoots; in this regime it can park sigma2 at its floor and
never recover. By default (``safeguard=True``) the step uses the normalized
average ``R_t / (1 - alpha**k)`` and is halved until sigma2 keeps at least
half its value and nu changes by at most 10 %. In steady state neither
safeguard is active. ``safeguard=False`` gives the literal recursion.

From the fixed start (0, ..., 0, 1, 1) the first updates can also lead into
a spurious basin (negative phi_1, small nu) that takes tens of thousands of
steps to leave. With ``warm_start=True`` (default) the estimate is replaced,
once the warm-up window has been observed, by the least-squares (phi,
sigma2) of that window at nu = 1, and ``R`` is rebuilt from the window's scores at the new estimate. Only
observed data enter, so forecasts remain out-of-sample.
"""
from __future__ import annotations

import copy
import csv
import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import PowerSeries, format_timestamp
from .batch import closed_form_phi_sigma, design_from
from .errors import ConfigError, EstimationError, StateError
from .gln import NU_BOUNDS, GlnPredictive, ThetaState
from .kernels.numba_impl import SIGMA2_FLOOR


@dataclass(frozen=True)
class RecursiveConfig:
    p: int = 2
    alpha: float = 0.9994
    warmup: int | None = None
    delta: float = 0.005
    safeguard: bool = True
    warm_start: bool = True

    def __post_init__(self):
        if self.p < 1:
            raise ConfigError("lag order p must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"forgetting factor must lie in (0, 1), got {self.alpha}")
        if self.warmup is None:
            object.__setattr__(self, "warmup", 100 + self.p)
        if self.warmup < self.p + 1:
            raise ConfigError("warmup must be at least p + 1")

    @property
    def n_alpha(self):
        """Effective number of observations, 1 / (1 - alpha)."""
        return 1.0 / (1.0 - self.alpha)


@dataclass
class RecursiveState:
    """Mutable tracker state. ``lags[0]`` is the most recent (coarsened) value."""

    config: RecursiveConfig
    theta: np.ndarray = None
    R: np.ndarray = None
    lags: np.ndarray = None
    t: int = 0
    n_buffered: int = 0
    n_skipped: int = 0
    weight: float = 0.0
    window: list = None  # [(x, contiguous)] observed during warm-up, for warm_start

    def __post_init__(self):
        p = self.config.p
        if self.theta is None:
            self.theta = np.concatenate([np.zeros(p), [1.0, 1.0]])
        if self.R is None:
            self.R = np.zeros((p + 2, p + 2))
        if self.lags is None:
            self.lags = np.full(p, 0.5)
        self.theta = np.asarray(self.theta, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.lags = np.asarray(self.lags, dtype=float)
        if self.window is None:
            self.window = []

    @property
    def theta_state(self):
        return ThetaState.from_vector(self.theta)

    def _ints(self):
        return np.array([self.t, self.n_buffered, self.n_skipped], dtype=np.int64)

    def _set_ints(self, ints):
        self.t, self.n_buffered, self.n_skipped = (int(v) for v in ints)

    def copy(self):
        return copy.deepcopy(self)

    def to_dict(self):
        return {
            "config": {
                "p": self.config.p,
                "alpha": self.config.alpha,
                "warmup": self.config.warmup,
                "delta": self.config.delta,
                "safeguard": self.config.safeguard,
                "warm_start": self.config.warm_start,
            },
            "theta": self.theta.tolist(),
            "R": self.R.tolist(),
            "lags": self.lags.tolist(),
            "t": self.t,
            "n_buffered": self.n_buffered,
            "n_skipped": self.n_skipped,
            "weight": self.weight,
            "window": [[float(x), bool(ok)] for x, ok in self.window],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            RecursiveConfig(**d["config"]),
            np.array(d["theta"]),
            np.array(d["R"]),
            np.array(d["lags"]),
            d["t"],
            d["n_buffered"],
            d["n_skipped"],
            d.get("weight", 0.0),
            [(float(x), bool(ok)) for x, ok in d.get("window", [])],
        )

    def predictive(self):
        """GLN forecast of the next value, or None until p lags are buffered."""
        p = self.config.p
        if self.n_buffered < p:
            return None
        th = self.theta_state
        mu = float(th.phi @ kernels.numpy_impl._gamma(self.lags, th.nu))
        return GlnPredictive(mu, th.sigma2, th.nu, self.config.delta)


def score_vector(state, x_t):
    """Gradient of the one-step log density of ``x_t`` at the current estimate."""
    if state.n_buffered < state.config.p:
        raise StateError("lag buffer not full; cannot evaluate the score")
    if not 0.0 < x_t < 1.0:
        raise StateError("observation must lie strictly inside (0, 1)")
    return kernels.glnar_score(state.theta, float(x_t), state.lags)


def step(state, x_t, contiguous=True):
    """Consume one coarsened observation, updating ``state`` in place.

    Returns the state. Observations whose score is not finite are skipped
    and counted in ``state.n_skipped``.
    """
    if not 0.0 < x_t < 1.0:
        raise StateError("observation must lie strictly inside (0, 1); coarsen it first")
    cfg = state.config
    collecting = _collecting(state)
    if collecting:
        state.window.append((float(x_t), bool(contiguous) and state.t > 0))
    ints = state._ints()
    weight = np.array([state.weight])
    kernels.glnar_step(
        float(x_t), bool(contiguous), cfg.alpha, cfg.warmup,
        state.theta, state.R, state.lags, ints, weight, cfg.safeguard,
    )
    state._set_ints(ints)
    state.weight = float(weight[0])
    if collecting and state.t == cfg.warmup:
        warm_start(state)
    return state


def _collecting(state):
    return state.config.warm_start and state.t < state.config.warmup


def warm_start(state):
    """Replace theta by a batch fit on the warm-up window and rebuild R there.

    Leaves the state unchanged when the window is too short or the fit fails.
    """
    cfg = state.config
    p = cfg.p
    window, state.window = state.window, []
    if not window:
        return False
    x = np.array([w[0] for w in window])
    ok = np.array([w[1] for w in window])
    run = np.zeros(x.size, dtype=int)
    for i in range(1, x.size):
        run[i] = run[i - 1] + 1 if ok[i] else 0
    rows = np.flatnonzero(run >= p)
    if rows.size < 10 * (p + 2):
        return False
    try:
        # nu is poorly identified on ~100 values; keep nu = 1 and use the
        # closed-form (phi, sigma2) at that shape
        phi, s2 = closed_form_phi_sigma(design_from(x, rows, p, 1.0))
    except EstimationError:
        return False
    if not s2 > 0:
        return False
    theta = np.concatenate([phi, [s2, 1.0]])
    a = cfg.alpha
    R = np.zeros((p + 2, p + 2))
    weight = 0.0
    for i in rows:
        h = kernels.glnar_score(theta, x[i], x[i - 1 :: -1][:p])
        if np.all(np.isfinite(h)):
            R = a * R + (1.0 - a) * np.outer(h, h)
            weight = a * weight + (1.0 - a)
    state.theta[:] = theta
    state.R[:] = 0.5 * (R + R.T)
    state.weight = weight
    return True


@dataclass
class RecursiveRun:
    """Parameter trajectory and one-step forecasts from :func:`run_series`.

    ``thetas[i]`` is the estimate after consuming record i and ``mu_next[i]``
    the transform-scale mean it implies for record i + 1.
    """

    timestamps: np.ndarray
    thetas: np.ndarray
    mu_next: np.ndarray
    config: RecursiveConfig
    state: RecursiveState
    n_skipped: int = 0

    @property
    def p(self):
        return self.config.p

    def theta_at(self, i):
        return ThetaState.from_vector(self.thetas[i])

    @property
    def n_at_bounds(self):
        """Steps whose estimate sits on the sigma2 floor or a nu clamp.

        Nonzero counts flag a degenerate local likelihood, typically a short
        memory (small n_alpha) meeting long runs of clipped values, which a
        unit-root AR predicts exactly.
        """
        s2, nu = self.thetas[:, -2], self.thetas[:, -1]
        hit = (s2 <= 2 * SIGMA2_FLOOR) | (nu <= 2 * NU_BOUNDS[0]) | (nu >= NU_BOUNDS[1])
        return int(np.count_nonzero(hit))

    def predictive_for(self, targets):
        """GLN forecasts for target indices (each made at ``target - 1``)."""
        origin = np.asarray(targets) - 1
        if np.any(origin < 0):
            raise EstimationError("target index 0 has no forecast origin")
        mu = self.mu_next[origin]
        if np.any(~np.isfinite(mu)):
            raise EstimationError("some targets lack a contiguous lag window")
        th = self.thetas[origin]
        return GlnPredictive(mu, th[:, -2], th[:, -1], self.config.delta)

    def write_trajectory(self, path):
        p = self.p
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp"] + [f"phi_{k + 1}" for k in range(p)] + ["sigma2", "nu"])
            for ts, row in zip(self.timestamps, self.thetas):
                w.writerow([format_timestamp(ts)] + [repr(float(v)) for v in row])


def run_series(series, config, state=None, backend=None):
    """Run the tracker over a coarsened series (optionally resuming ``state``)."""
    if not isinstance(series, PowerSeries):
        series = PowerSeries.regular(series)
    if len(series) <= config.warmup and state is None:
        raise EstimationError(
            f"series of length {len(series)} is not longer than the warm-up ({config.warmup})"
        )
    x = series.values
    if np.any(~((x > 0) & (x < 1))):
        raise EstimationError("series must lie strictly inside (0, 1); coarsen it first")
    state = RecursiveState(config) if state is None else state
    contiguous = series.step_ok()
    if state.n_buffered and len(series):
        contiguous[0] = True  # resuming: caller guarantees continuity
    fn = kernels.get("glnar_recursion", backend) if backend else kernels.glnar_recursion

    def chunk(lo, hi):
        ints = state._ints()
        weight = np.array([state.weight])
        out = fn(
            np.ascontiguousarray(x[lo:hi]), contiguous[lo:hi], config.alpha, config.warmup,
            state.theta, state.R, state.lags, ints, weight, bool(config.safeguard),
        )
        state._set_ints(ints)
        state.weight = float(weight[0])
        return out

    if _collecting(state):
        k = min(config.warmup - state.t, x.size)
        state.window += [(float(v), bool(c)) for v, c in zip(x[:k], contiguous[:k])]
        th1, mu1 = chunk(0, k)
        if state.t == config.warmup and warm_start(state):
            # the forecast made at the end of the window uses the fitted estimate
            th1[-1] = state.theta
            mu1[-1] = _next_mean(state) if state.n_buffered >= config.p else np.nan
        th2, mu2 = chunk(k, x.size)
        thetas, mu_next = np.vstack([th1, th2]), np.concatenate([mu1, mu2])
    else:
        thetas, mu_next = chunk(0, x.size)
    return RecursiveRun(series.timestamps, thetas, mu_next, config, state, state.n_skipped)


def _next_mean(state):
    th = state.theta_state
    return float(th.phi @ kernels.numpy_impl._gamma(state.lags, th.nu))


def write_state(state, path):
    with open(path, "w") as fh:
        json.dump(state.to_dict(), fh)


def read_state(path):
    with open(path) as fh:
        return RecursiveState.from_dict(json.load(fh))
