"""Synthetic GLN-AR streams with known parameters."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import PowerSeries
from .errors import ConfigError
from .gln import ThetaState, inverse_transform, transform

RNG_NAME = "numpy.random.Generator(PCG64).standard_normal"


def is_stationary(phi):
    """True when all roots of 1 - phi_1 z - ... - phi_p z^p lie outside the unit circle."""
    phi = np.asarray(phi, dtype=float)
    p = phi.size
    companion = np.zeros((p, p))
    companion[0] = phi
    companion[1:, :-1] = np.eye(p - 1)
    return bool(np.max(np.abs(np.linalg.eigvals(companion))) < 1.0)


def ar_autocovariance(phi, sigma2, max_lag):
    """Theoretical autocovariances gamma(0..max_lag) of a stationary AR(p)."""
    phi = np.asarray(phi, dtype=float)
    p = phi.size
    # Yule-Walker: gamma(k) - sum_j phi_j gamma(|k-j|) = sigma2 * [k == 0], k = 0..p
    A = np.zeros((p + 1, p + 1))
    for k in range(p + 1):
        A[k, k] += 1.0
        for j in range(1, p + 1):
            A[k, abs(k - j)] -= phi[j - 1]
    rhs = np.zeros(p + 1)
    rhs[0] = sigma2
    g = list(np.linalg.solve(A, rhs))
    for k in range(p + 1, max_lag + 1):
        g.append(sum(phi[j - 1] * g[k - j] for j in range(1, p + 1)))
    return np.array(g[: max_lag + 1])


@dataclass
class SimSpec:
    theta: ThetaState
    n: int
    seed: int = 0
    burn_in: int = 1000
    regime_switches: list = field(default_factory=list)  # [(time, ThetaState)]
    start: str = "2000-01-01T00:00:00"
    resolution_minutes: int = 10

    def __post_init__(self):
        if self.n <= 0 or self.burn_in < 0:
            raise ConfigError("n must be positive and burn_in non-negative")
        self.regime_switches = sorted(self.regime_switches, key=lambda s: s[0])
        for when, th in [(0, self.theta)] + list(self.regime_switches):
            if th.p != self.theta.p:
                raise ConfigError("all regimes must share the lag order p")
            if not is_stationary(th.phi):
                raise ConfigError(f"non-stationary AR coefficients {th.phi.tolist()}")
            if not 0 <= when < self.n:
                raise ConfigError(f"regime switch time {when} outside [0, n)")


@dataclass
class SimResult:
    series: PowerSeries
    y: np.ndarray  # transform-scale values under the regime's nu
    theta_path: list  # [(start index, ThetaState)]
    metadata: dict

    def truth_at(self, t):
        current = self.theta_path[0][1]
        for start, th in self.theta_path:
            if start <= t:
                current = th
        return current

    def sidecar(self):
        return {
            "theta_path": [{"start": int(s), **th.to_dict()} for s, th in self.theta_path],
            **self.metadata,
        }

    def write_sidecar(self, path):
        with open(path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)


def simulate(spec, backend=None):
    """Draw a GLN-AR path; ``spec.n`` values are returned after ``burn_in``.

    Regime switch times index the returned series. At a switch the new shape
    is applied to the already observed values, so the path in (0, 1) stays
    continuous and the conditional law after the switch is exactly the new
    regime's GLN-AR density.
    """
    ar_filter = kernels.get("ar_filter", backend) if backend else kernels.ar_filter
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    total = spec.n + spec.burn_in
    z = rng.standard_normal(total)
    p = spec.theta.p
    bounds = [(0, spec.theta)] + [(spec.burn_in + t, th) for t, th in spec.regime_switches]
    bounds.append((total, None))

    y = np.empty(total)
    x = np.empty(total)
    prev_x = None
    for (start, th), (stop, _) in zip(bounds[:-1], bounds[1:]):
        if stop <= start:
            continue
        if prev_x is None:
            y_init = np.zeros(p)
        else:
            y_init = np.asarray(transform(prev_x, th.nu))
        seg = ar_filter(th.phi, np.sqrt(th.sigma2), z[start:stop], y_init)
        y[start:stop] = seg
        # keep values representable strictly inside (0, 1)
        x[start:stop] = np.clip(inverse_transform(seg, th.nu), np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
        prev_x = x[max(0, stop - p):stop][::-1]
        if prev_x.size < p:
            raise ConfigError("regimes must be at least p steps long")

    res = np.timedelta64(spec.resolution_minutes, "m")
    series = PowerSeries.regular(x[spec.burn_in:], spec.start, res, "simulated")
    meta = {
        "generator": RNG_NAME,
        "numpy_version": np.__version__,
        "seed": int(spec.seed),
        "n": int(spec.n),
        "burn_in": int(spec.burn_in),
    }
    path = [(0, spec.theta)] + [(int(t), th) for t, th in spec.regime_switches]
    return SimResult(series, y[spec.burn_in:], path, meta)
