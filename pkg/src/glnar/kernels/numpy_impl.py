"""Reference implementations in plain numpy/scipy.

Same contracts as :mod:`numba_impl`. The recursions are inherently
sequential, so they loop in Python over vectorized per-step arithmetic; the
AR filter is delegated to :func:`scipy.signal.lfilter`.
"""
import numpy as np
from scipy.linalg import solve_triangular
from scipy.signal import lfilter, lfiltic

from .numba_impl import JITTER, NU_MAX, NU_MIN, SIGMA2_FLOOR


def ar_filter(phi, sigma, z, y_init):
    a = np.concatenate([[1.0], -np.asarray(phi, dtype=float)])
    b = np.array([float(sigma)])
    zi = lfiltic(b, a, y=np.asarray(y_init, dtype=float))
    y, _ = lfilter(b, a, np.asarray(z, dtype=float), zi=zi)
    return y


def _gamma(x, nu):
    a = nu * np.log(x)
    return a - np.log(-np.expm1(a))


def glnar_score(theta, x, buf, h=None):
    p = theta.size - 2
    s2, nu = theta[p], theta[p + 1]
    phi = theta[:p]
    lags = np.asarray(buf[:p], dtype=float)
    lx = np.log(np.concatenate([[x], lags]))
    a = nu * lx
    om = -np.expm1(a)
    y = a - np.log(om)
    u = lx / om
    eps = y[0] - phi @ y[1:]
    du = u[0] - phi @ u[1:]
    out = np.empty(p + 2) if h is None else h
    out[:p] = eps * y[1:] / s2
    out[p] = -0.5 / s2 + 0.5 * eps * eps / (s2 * s2)
    out[p + 1] = 1.0 / nu + lx[0] * np.exp(a[0]) / om[0] - eps * du / s2
    return out


def solve_spd(R, h):
    """Cholesky solve with one jittered retry; None if R is not SPD."""
    for jitter in (0.0, JITTER * max(np.trace(R) / R.shape[0], 1.0)):
        try:
            L = np.linalg.cholesky(R + jitter * np.eye(R.shape[0]))
        except np.linalg.LinAlgError:
            continue
        # cholesky can succeed with a zero pivot on some platforms
        if not np.all(np.diag(L) > 0):
            continue
        w = solve_triangular(L, h, lower=True)
        return solve_triangular(L.T, w, lower=False)
    return None


def _push(buf, ints, x, p):
    buf[1:] = buf[:-1].copy()
    buf[0] = x
    ints[1] = min(ints[1] + 1, p)


def _limit_scale(theta, d, p):
    sc = 1.0
    for _ in range(60):
        if theta[p] + sc * d[p] >= 0.5 * theta[p] and abs(sc * d[p + 1]) <= 0.1 * theta[p + 1]:
            break
        sc *= 0.5
    return sc


def glnar_step(x, contiguous, alpha, warmup, theta, R, buf, ints, weight, safeguard=True):
    """Consume one observation; returns the next-step transform-scale mean or NaN."""
    p = theta.size - 2
    if not contiguous:
        ints[1] = 0
    if ints[1] >= p:
        h = glnar_score(theta, x, buf)
        if np.all(np.isfinite(h)):
            R *= alpha
            R += (1.0 - alpha) * np.outer(h, h)
            R[...] = 0.5 * (R + R.T)
            weight[0] = alpha * weight[0] + (1.0 - alpha)
            if ints[0] + 1 > warmup:
                d = solve_spd(R / weight[0] if safeguard else R, h)
                if d is not None:
                    d *= 1.0 - alpha
                    theta += (_limit_scale(theta, d, p) if safeguard else 1.0) * d
                    theta[p] = max(theta[p], SIGMA2_FLOOR)
                    theta[p + 1] = min(max(theta[p + 1], NU_MIN), NU_MAX)
        else:
            ints[2] += 1
    ints[0] += 1
    _push(buf, ints, x, p)
    if ints[1] >= p:
        return float(theta[:p] @ _gamma(buf, theta[p + 1]))
    return np.nan


def glnar_recursion(x, contiguous, alpha, warmup, theta, R, buf, ints, weight, safeguard):
    n = x.shape[0]
    thetas = np.empty((n, theta.size))
    mu_next = np.empty(n)
    for i in range(n):
        mu_next[i] = glnar_step(
            x[i], contiguous[i], alpha, warmup, theta, R, buf, ints, weight, safeguard
        )
        thetas[i] = theta
    return thetas, mu_next


def rls_step(x, contiguous, alpha, warmup, phi, R, sums, buf, ints):
    p = phi.size
    if not contiguous:
        ints[1] = 0
    if ints[1] >= p:
        eps = x - phi @ buf
        R *= alpha
        R += (1.0 - alpha) * np.outer(buf, buf)
        if ints[0] + 1 > warmup:
            sums[0] = alpha * sums[0] + eps * eps
            sums[1] = alpha * sums[1] + 1.0
            d = solve_spd(R, buf * eps)
            if d is not None:
                phi += (1.0 - alpha) * d
    ints[0] += 1
    _push(buf, ints, x, p)
    s2 = sums[0] / sums[1] if sums[1] > 0 else np.nan
    mean = float(phi @ buf) if ints[1] >= p else np.nan
    return s2, mean


def rls_recursion(x, contiguous, alpha, warmup, phi, R, sums, buf, ints):
    n = x.shape[0]
    phis = np.empty((n, phi.size))
    sigma2 = np.empty(n)
    mean_next = np.empty(n)
    for i in range(n):
        sigma2[i], mean_next[i] = rls_step(x[i], contiguous[i], alpha, warmup, phi, R, sums, buf, ints)
        phis[i] = phi
    return phis, sigma2, mean_next
