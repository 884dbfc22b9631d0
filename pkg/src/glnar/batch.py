"""Batch maximum likelihood for GLN-AR(p).

The AR coefficients and innovation variance have closed forms given the
shape ``nu``; ``nu`` itself is found by a safeguarded Newton iteration on the
negative log-likelihood (parameter-free constant dropped)::

    nll = n/2 ln(sigma2) - n ln(nu) + sum ln(1 - x_t**nu) + |y - Y phi|^2 / (2 sigma2)

where ``n`` is the number of usable rows, ``y`` the transformed targets and
``Y`` the matrix of their p lags.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import PowerSeries
from .errors import EstimationError
from .gln import NU_BOUNDS, ThetaState, log_one_minus_pow, nu_derivatives, transform

COND_MAX = 1e12


@dataclass
class DesignData:
    """Targets, lag matrices and their nu-derivatives at a fixed ``nu``."""

    nu: float
    x: np.ndarray  # targets on the (0, 1) scale
    y: np.ndarray
    Y: np.ndarray
    u: np.ndarray
    U: np.ndarray
    v: np.ndarray
    V: np.ndarray

    @property
    def n(self):
        return self.y.size

    @property
    def p(self):
        return self.Y.shape[1]


def _values_and_rows(series, p):
    if isinstance(series, PowerSeries):
        x = series.values
        rows = np.flatnonzero(series.lag_ok(p))
    else:
        x = np.asarray(series, dtype=float)
        rows = np.arange(p, x.size)
    return x, rows


def design_from(x, rows, p, nu):
    """Assemble a design from values ``x`` and usable target indices ``rows``."""
    if rows.size == 0:
        raise EstimationError(f"not enough contiguous data for p={p} lags")
    y_all = transform(x, nu)
    u_all, v_all = nu_derivatives(x, nu)
    lag = rows[:, None] - np.arange(1, p + 1)[None, :]
    return DesignData(
        nu=float(nu),
        x=x[rows],
        y=y_all[rows],
        Y=y_all[lag],
        u=u_all[rows],
        U=u_all[lag],
        v=v_all[rows],
        V=v_all[lag],
    )


def build_design(series, p, nu):
    """Design for a coarsened series; rows whose p lags are not contiguous are dropped."""
    if p < 1:
        raise EstimationError("lag order p must be >= 1")
    x, rows = _values_and_rows(series, p)
    if np.any(~((x > 0) & (x < 1))):
        raise EstimationError("series must lie strictly inside (0, 1); coarsen it first")
    return design_from(x, rows, p, nu)


def closed_form_phi_sigma(design):
    """Least-squares AR coefficients and ML innovation variance."""
    Y, y = design.Y, design.y
    gram = Y.T @ Y
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise EstimationError(
            f"normal equations are singular (condition {cond:.3g}); try a smaller lag order p"
        )
    phi = np.linalg.solve(gram, Y.T @ y)
    resid = y - Y @ phi
    return phi, float(resid @ resid) / design.n


def negloglik(design, theta):
    resid = design.y - design.Y @ theta.phi
    n = design.n
    return (
        0.5 * n * math.log(theta.sigma2)
        - n * math.log(theta.nu)
        + float(np.sum(log_one_minus_pow(design.x, theta.nu)))
        + float(resid @ resid) / (2.0 * theta.sigma2)
    )


def _pow_ratio(x, nu):
    a = nu * np.log(x)
    return np.exp(a) / -np.expm1(a)


def nu_score(design, theta):
    """Derivative of the negative log-likelihood with respect to nu."""
    lx = np.log(design.x)
    resid = design.y - design.Y @ theta.phi
    du = design.u - design.U @ theta.phi
    return float(
        -design.n / theta.nu
        - np.sum(lx * _pow_ratio(design.x, theta.nu))
        + (du @ resid) / theta.sigma2
    )


def nu_curvature(design, theta):
    """Second derivative of the negative log-likelihood with respect to nu."""
    lx = np.log(design.x)
    a = theta.nu * lx
    one_minus = -np.expm1(a)
    resid = design.y - design.Y @ theta.phi
    du = design.u - design.U @ theta.phi
    dv = design.v - design.V @ theta.phi
    return float(
        design.n / theta.nu**2
        - np.sum(lx**2 * np.exp(a) / one_minus**2)
        + (dv @ resid) / theta.sigma2
        + (du @ du) / theta.sigma2
    )


@dataclass
class BatchOptions:
    eps: float = 1e-3
    max_iter: int = 100
    armijo: float = 1e-4
    shrink: float = 0.5
    nu0: float = 1.0
    nu_bounds: tuple = NU_BOUNDS


@dataclass
class BatchFit:
    theta: ThetaState
    iterations: int
    nll_trace: list
    converged: bool
    decrement: float
    nu_trace: list = field(default_factory=list)
    n_obs: int = 0

    def to_dict(self):
        return {
            "phi": self.theta.phi.tolist(),
            "sigma2": self.theta.sigma2,
            "nu": self.theta.nu,
            "iterations": self.iterations,
            "converged": self.converged,
            "decrement": self.decrement,
            "nll_trace": list(self.nll_trace),
            "n_obs": self.n_obs,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d):
        return cls(
            theta=ThetaState(d["phi"], d["sigma2"], d["nu"]),
            iterations=int(d["iterations"]),
            nll_trace=list(d["nll_trace"]),
            converged=bool(d["converged"]),
            decrement=float(d["decrement"]),
            n_obs=int(d.get("n_obs", 0)),
        )


def _profile(x, rows, p, nu):
    design = design_from(x, rows, p, nu)
    phi, s2 = closed_form_phi_sigma(design)
    if not s2 > 0:
        raise EstimationError("residual variance is zero; the series is deterministic")
    return design, ThetaState(phi, s2, nu)


def fit_batch(series, p, options=None):
    """Alternate closed-form (phi, sigma2) updates with damped Newton steps on nu.

    Stops when half the squared Newton decrement drops below ``options.eps``.
    When the curvature in nu is not positive a scaled gradient step is taken
    instead; both use Armijo backtracking, so the objective never increases.
    """
    if p < 1:
        raise EstimationError("lag order p must be >= 1")
    x, rows = _values_and_rows(series, p)
    if np.any(~((x > 0) & (x < 1))):
        raise EstimationError("series must lie strictly inside (0, 1); coarsen it first")
    return fit_rows(x, rows, p, options)


def fit_rows(x, rows, p, options=None):
    """:func:`fit_batch` on values ``x`` with explicit usable target indices ``rows``."""
    opt = options or BatchOptions()
    lo, hi = opt.nu_bounds
    nu = float(np.clip(opt.nu0, lo, hi))

    trace, nus = [], []
    converged = False
    decrement = math.inf
    it = 0
    while it < opt.max_iter:
        it += 1
        design, theta = _profile(x, rows, p, nu)
        f = negloglik(design, theta)
        if not math.isfinite(f):
            raise EstimationError(f"non-finite negative log-likelihood at nu={nu}")
        trace.append(f)
        nus.append(nu)

        g = nu_score(design, theta)
        H = nu_curvature(design, theta)
        if H > 0:
            step = -g / H
            decrement = g * g / H
            if decrement / 2.0 <= opt.eps:
                converged = True
                break
        else:
            step = -g / design.n
            decrement = math.inf

        t = 1.0
        accepted = None
        while t > 1e-12:
            trial = float(np.clip(nu + t * step, lo, hi))
            f_trial = negloglik(design_from(x, rows, p, trial), ThetaState(theta.phi, theta.sigma2, trial))
            if math.isfinite(f_trial) and f_trial <= f + opt.armijo * g * (trial - nu):
                accepted = trial
                break
            t *= opt.shrink
        if accepted is None or accepted == nu:
            break  # no admissible progress (e.g. pinned at a bound)
        nu = accepted
    else:
        # iteration cap reached: report the last accepted nu with its profile
        design, theta = _profile(x, rows, p, nu)
        trace.append(negloglik(design, theta))
        nus.append(nu)

    return BatchFit(theta, it, trace, converged, decrement, nus, int(rows.size))


def predict_means(theta, x, rows):
    """Transform-scale conditional means for targets at ``rows``."""
    p = theta.p
    y_all = transform(x, theta.nu)
    lag = rows[:, None] - np.arange(1, p + 1)[None, :]
    return y_all[lag] @ theta.phi
