"""Vectorized one-step predictive distributions on [0, 1].

Every predictive object describes ``T`` distributions at once (one per
forecast time). ``cdf(y)`` broadcasts ``y`` against the record axis: a 1-D
grid of length M gives a ``(T, M)`` matrix, a ``(T, M)`` array is evaluated
row by row. CDFs are right-continuous, 0 below 0 and 1 at or above 1.
"""
from __future__ import annotations

import numpy as np

trapezoid = getattr(np, "trapezoid", None) or np.trapz


def as_levels(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any((tau <= 0.0) | (tau >= 1.0)) or np.any(~np.isfinite(tau)):
        from .errors import DomainError

        raise DomainError("quantile levels must lie in the open interval (0, 1)")
    return tau


def _rows(y, n):
    """Shape ``y`` so it broadcasts against per-record parameters of shape (n, 1)."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 0:
        return np.full((n, 1), float(y))
    if y.ndim == 1:
        return y[None, :]
    return y


_KINDS = {}


def register(kind):
    """Class decorator making a predictive type restorable by :func:`from_params`."""

    def deco(cls):
        cls.kind = kind
        _KINDS[kind] = cls
        return cls

    return deco


def from_params(kind, params):
    if kind not in _KINDS:
        raise ValueError(f"unknown predictive kind {kind!r}")
    return _KINDS[kind].from_params(params)


class Predictive:
    """Base class. Subclasses implement ``_cdf_inner`` and ``quantile``."""

    #: True when the distribution may put point masses inside [0, 1].
    discrete = False
    kind = None

    def params(self):
        """Constructor arguments as a dict of arrays (for archiving)."""
        raise NotImplementedError

    @classmethod
    def from_params(cls, params):
        return cls(**params)

    def __len__(self):
        raise NotImplementedError

    def _cdf_inner(self, y):
        raise NotImplementedError

    def _cdf_left_inner(self, y):
        return self._cdf_inner(y)

    def _bounded(self, y, inner):
        y = _rows(y, len(self))
        out = np.empty(np.broadcast_shapes((len(self), 1), y.shape))
        yb = np.broadcast_to(y, out.shape)
        lo = yb < 0.0
        hi = yb >= 1.0
        mid = ~(lo | hi)
        out[lo] = 0.0
        out[hi] = 1.0
        if mid.any():
            # evaluate on a clipped copy to keep transforms finite; masked after
            val = inner(np.clip(yb, 0.0, 1.0))
            out[mid] = np.broadcast_to(val, out.shape)[mid]
        return out

    def cdf(self, y):
        return self._bounded(y, self._cdf_inner)

    def cdf_left(self, y):
        """Left limit F(y-). Equal to ``cdf`` for continuous laws."""
        y = _rows(y, len(self))
        out = self._bounded(y, self._cdf_left_inner)
        # F(1-) is the mass strictly below 1, not 1
        at_one = np.broadcast_to(y, out.shape) == 1.0
        if at_one.any():
            val = self._cdf_left_inner(np.minimum(np.broadcast_to(y, out.shape), 1.0))
            out[at_one] = np.broadcast_to(val, out.shape)[at_one]
        return out

    def atoms(self):
        """(T, K) array of jump locations inside [0, 1], or None."""
        return None

    def quantile(self, tau):
        raise NotImplementedError

    def median(self):
        return self.quantile(0.5)

    def point(self, rule="median"):
        if rule == "median":
            return self.median()
        if rule == "mean":
            return self.mean()
        raise ValueError(f"unknown point rule {rule!r}")

    def mean(self):
        raise NotImplementedError

    def take(self, idx):
        raise NotImplementedError


@register("point_mass")
class PointMassPredictive(Predictive):
    """Degenerate forecast: all mass at ``loc``."""

    discrete = True

    def __init__(self, loc):
        self.loc = np.atleast_1d(np.asarray(loc, dtype=float))

    def __len__(self):
        return self.loc.shape[0]

    def params(self):
        return {"loc": self.loc}

    def _cdf_inner(self, y):
        return (self.loc[:, None] <= y).astype(float)

    def _cdf_left_inner(self, y):
        return (self.loc[:, None] < y).astype(float)

    def atoms(self):
        return self.loc[:, None]

    def quantile(self, tau):
        tau = as_levels(tau)
        if tau.ndim == 0:
            return self.loc.copy()
        return np.repeat(self.loc[:, None], tau.size, axis=1)

    def mean(self):
        return self.loc.copy()

    def take(self, idx):
        return PointMassPredictive(self.loc[idx])


@register("grid")
class GridPredictive(Predictive):
    """CDF tabulated on a grid, linear in between.

    Used when an archive is read back from disk and the parametric form is no
    longer available.
    """

    def __init__(self, grid, values):
        self.grid = np.asarray(grid, dtype=float)
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        if self.values.shape[1] != self.grid.size:
            raise ValueError("CDF table width does not match grid size")

    def __len__(self):
        return self.values.shape[0]

    def params(self):
        return {"grid": self.grid, "values": self.values}

    def _cdf_inner(self, y):
        y = np.broadcast_to(y, (len(self), np.shape(y)[-1]))
        j = np.clip(np.searchsorted(self.grid, y, side="right") - 1, 0, self.grid.size - 2)
        g0 = self.grid[j]
        g1 = self.grid[j + 1]
        rows = np.arange(len(self))[:, None]
        f0 = self.values[rows, j]
        f1 = self.values[rows, j + 1]
        w = np.clip((y - g0) / (g1 - g0), 0.0, 1.0)
        return f0 + w * (f1 - f0)

    def quantile(self, tau):
        tau = as_levels(tau)
        levels = np.atleast_1d(tau)
        out = np.empty((len(self), levels.size))
        for i, row in enumerate(self.values):
            # smallest grid value whose CDF reaches tau, interpolated
            mono = np.maximum.accumulate(row)
            out[i] = np.interp(levels, mono, self.grid, left=self.grid[0], right=self.grid[-1])
        return out[:, 0] if tau.ndim == 0 else out

    def mean(self):
        # E[X] = int_0^1 (1 - F(y)) dy
        return trapezoid(1.0 - self.values, self.grid, axis=1)

    def take(self, idx):
        return GridPredictive(self.grid, self.values[idx])
