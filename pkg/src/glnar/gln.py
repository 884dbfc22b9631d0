"""Generalized logit-normal (GLN) distribution.

A variable X in (0, 1) is GLN(mu, sigma2, nu) when

    y = ln(x**nu / (1 - x**nu))

is Gaussian N(mu, sigma2). ``nu = 1`` gives the ordinary logit-normal law.
All kernels are written in log space (``a = nu * ln x``) so that values a
few thousandths away from the bounds keep full precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import ndtr, ndtri

from .errors import DomainError
from .predictive import Predictive, as_levels, register

LOG_2PI = math.log(2.0 * math.pi)
NU_BOUNDS = (1e-3, 20.0)

_GH_NODES, _GH_WEIGHTS = hermegauss(96)
_GH_WEIGHTS = _GH_WEIGHTS / math.sqrt(2.0 * math.pi)


def _open_unit(x, name="x"):
    x = np.asarray(x, dtype=float)
    if np.any(~((x > 0.0) & (x < 1.0))):
        raise DomainError(f"{name} must lie in the open interval (0, 1)")
    return x


def _positive(value, name):
    if np.any(~(np.asarray(value) > 0.0)):
        raise DomainError(f"{name} must be positive")


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class ThetaState:
    """GLN-AR parameters: AR coefficients, innovation variance, shape."""

    phi: np.ndarray
    sigma2: float
    nu: float

    def __post_init__(self):
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=float)).copy()
        self.sigma2 = float(self.sigma2)
        self.nu = float(self.nu)
        if self.phi.ndim != 1 or self.phi.size < 1:
            raise DomainError("phi must be a non-empty vector")
        _positive(self.sigma2, "sigma2")
        _positive(self.nu, "nu")

    @property
    def p(self):
        return self.phi.size

    def as_vector(self):
        return np.concatenate([self.phi, [self.sigma2, self.nu]])

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:-2], vec[-2], vec[-1])

    def to_dict(self):
        return {"phi": self.phi.tolist(), "sigma2": self.sigma2, "nu": self.nu}


def transform(x, nu):
    """Generalized logit ``ln(x**nu / (1 - x**nu))``."""
    x = _open_unit(x)
    _positive(nu, "nu")
    a = nu * np.log(x)
    return _scalar(a - np.log(-np.expm1(a)))


def inverse_transform(y, nu):
    """Map a transform-scale value back to (0, 1)."""
    _positive(nu, "nu")
    y = np.asarray(y, dtype=float)
    # ln(x**nu) = log-sigmoid(y)
    return _scalar(np.exp(-np.logaddexp(0.0, -y) / nu))


def log_one_minus_pow(x, nu):
    """ln(1 - x**nu), accurate near both bounds."""
    return np.log(-np.expm1(nu * np.log(x)))


def log_density(x, mu, sigma2, nu):
    x = _open_unit(x)
    _positive(sigma2, "sigma2")
    _positive(nu, "nu")
    logx = np.log(x)
    a = nu * logx
    l1m = np.log(-np.expm1(a))
    z2 = (a - l1m - mu) ** 2 / sigma2
    return _scalar(-0.5 * (LOG_2PI + np.log(sigma2)) + np.log(nu) - logx - l1m - 0.5 * z2)


def density(x, mu, sigma2, nu):
    """GLN probability density at ``x``."""
    return _scalar(np.exp(log_density(x, mu, sigma2, nu)))


def nu_derivatives(x, nu):
    """First and second derivatives of the transform with respect to ``nu``.

    Returns ``(u, v)`` with ``u = ln(x) / (1 - x**nu)`` and
    ``v = u * ln(x) * x**nu / (1 - x**nu)``.
    """
    x = _open_unit(x)
    _positive(nu, "nu")
    logx = np.log(x)
    a = nu * logx
    one_minus = -np.expm1(a)
    u = logx / one_minus
    v = u * logx * np.exp(a) / one_minus
    return _scalar(u), _scalar(v)


@register("gln")
class GlnPredictive(Predictive):
    """One-step GLN forecasts, one per record.

    ``delta`` is the coarsening threshold of the fitted model; point forecasts
    below ``delta`` (above ``1 - delta``) are reported as 0 (1).
    """

    def __init__(self, mu, sigma2, nu, delta=None):
        self.mu = np.atleast_1d(np.asarray(mu, dtype=float))
        n = self.mu.shape[0]
        self.sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (n,)).copy()
        self.nu = np.broadcast_to(np.asarray(nu, dtype=float), (n,)).copy()
        _positive(self.sigma2, "sigma2")
        _positive(self.nu, "nu")
        self.delta = delta

    def __len__(self):
        return self.mu.shape[0]

    def params(self):
        delta = np.nan if self.delta is None else self.delta
        return {"mu": self.mu, "sigma2": self.sigma2, "nu": self.nu, "delta": np.array(delta)}

    @classmethod
    def from_params(cls, params):
        delta = float(params["delta"])
        return cls(params["mu"], params["sigma2"], params["nu"], None if np.isnan(delta) else delta)

    @property
    def sigma(self):
        return np.sqrt(self.sigma2)

    def _cdf_inner(self, y):
        with np.errstate(divide="ignore", invalid="ignore"):
            a = self.nu[:, None] * np.log(y)
            g = a - np.log(-np.expm1(a))
        return ndtr((g - self.mu[:, None]) / self.sigma[:, None])

    def quantile(self, tau):
        tau = as_levels(tau)
        if tau.ndim == 0:
            z = ndtri(tau)
            return inverse_transform(self.mu + self.sigma * z, self.nu)
        z = ndtri(tau)[None, :]
        return inverse_transform(self.mu[:, None] + self.sigma[:, None] * z, self.nu[:, None])

    def median(self):
        return inverse_transform(self.mu, self.nu)

    def mean(self):
        # Gauss-Hermite on the Gaussian scale: the integrand is smooth and
        # bounded there, unlike x * f(x) near the bounds of (0, 1).
        y = self.mu[:, None] + self.sigma[:, None] * _GH_NODES[None, :]
        return inverse_transform(y, self.nu[:, None]) @ _GH_WEIGHTS

    def point(self, rule="median"):
        pt = np.atleast_1d(super().point(rule))
        if self.delta is not None:
            pt = np.where(pt < self.delta, 0.0, np.where(pt > 1.0 - self.delta, 1.0, pt))
        return pt

    def take(self, idx):
        return GlnPredictive(self.mu[idx], self.sigma2[idx], self.nu[idx], self.delta)


def predictive_cdf(pred, x):
    """CDF of a single or vectorized GLN forecast at ``x`` in [0, 1]."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)):
        raise DomainError("x must lie in [0, 1]")
    return _scalar(np.squeeze(pred.cdf(x)))


def predictive_quantile(pred, tau):
    return _scalar(np.squeeze(pred.quantile(tau)))


def predictive_point(pred, rule="median"):
    return _scalar(np.squeeze(pred.point(rule)))
