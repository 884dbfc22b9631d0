"""Scalar-loop kernels compiled with numba.

The state arrays passed in are updated in place so that a run can be resumed.
``ints`` holds ``[t, n_buffered, n_skipped]``; ``buf[0]`` is the most recent
observation.
"""
import math

import numpy as np

from .._accel import njit

SIGMA2_FLOOR = 1e-8
NU_MIN = 1e-3
NU_MAX = 20.0
JITTER = 1e-10


@njit
def ar_filter(phi, sigma, z, y_init):
    """y[t] = sum_k phi[k] * y[t-k-1] + sigma * z[t], with y_init[k] = y[-k-1]."""
    p = phi.shape[0]
    n = z.shape[0]
    y = np.empty(n)
    for t in range(n):
        acc = sigma * z[t]
        for k in range(p):
            j = t - k - 1
            acc += phi[k] * (y[j] if j >= 0 else y_init[-j - 1])
        y[t] = acc
    return y


@njit
def _gamma(x, nu):
    a = nu * math.log(x)
    return a - math.log(-math.expm1(a))


@njit
def _u(x, nu):
    lx = math.log(x)
    return lx / (-math.expm1(nu * lx))


@njit
def _chol_solve(R, h, out):
    """Solve R d = h by Cholesky; returns False if R is not positive definite."""
    n = R.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        s = R[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return False
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            s = R[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    for i in range(n):
        s = h[i]
        for k in range(i):
            s -= L[i, k] * out[k]
        out[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = out[i]
        for k in range(i + 1, n):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]
    return True


@njit
def _solve_jittered(R, h, out):
    if _chol_solve(R, h, out):
        return True
    n = R.shape[0]
    scale = 0.0
    for i in range(n):
        scale += R[i, i]
    scale = max(scale / n, 1.0)
    Rj = R.copy()
    for i in range(n):
        Rj[i, i] += JITTER * scale
    return _chol_solve(Rj, h, out)


@njit
def glnar_score(theta, x, buf, h):
    """Gradient of the one-step GLN-AR log density at ``theta`` into ``h``."""
    p = theta.shape[0] - 2
    s2 = theta[p]
    nu = theta[p + 1]
    lx = math.log(x)
    a = nu * lx
    om = -math.expm1(a)
    eps = a - math.log(om)
    du = lx / om
    for k in range(p):
        eps -= theta[k] * _gamma(buf[k], nu)
        du -= theta[k] * _u(buf[k], nu)
    for k in range(p):
        h[k] = eps * _gamma(buf[k], nu) / s2
    h[p] = -0.5 / s2 + 0.5 * eps * eps / (s2 * s2)
    h[p + 1] = 1.0 / nu + lx * math.exp(a) / om - eps * du / s2


@njit
def _limit_scale(theta, d, p):
    """Largest 2**-k (k <= 60) keeping sigma2 above half its value and |dnu| <= nu / 10."""
    sc = 1.0
    for _ in range(60):
        if theta[p] + sc * d[p] >= 0.5 * theta[p] and abs(sc * d[p + 1]) <= 0.1 * theta[p + 1]:
            break
        sc *= 0.5
    return sc


@njit
def glnar_recursion(x, contiguous, alpha, warmup, theta, R, buf, ints, weight, safeguard):
    """Run the tracker over ``x``. ``weight[0]`` is the total forgetting weight in R.

    With ``safeguard`` the Newton direction is computed from R / weight (the
    weighted average rather than the partial sum) and the step is halved
    until sigma2 stays above half its value and nu moves by at most 10 %.
    """
    n = x.shape[0]
    m = theta.shape[0]
    p = m - 2
    thetas = np.empty((n, m))
    mu_next = np.full(n, np.nan)
    h = np.empty(m)
    d = np.empty(m)
    Rw = np.empty((m, m))
    for i in range(n):
        xi = x[i]
        if not contiguous[i]:
            ints[1] = 0
        if ints[1] >= p:
            glnar_score(theta, xi, buf, h)
            finite = True
            for k in range(m):
                if not math.isfinite(h[k]):
                    finite = False
            if finite:
                for r in range(m):
                    for c in range(m):
                        R[r, c] = alpha * R[r, c] + (1.0 - alpha) * h[r] * h[c]
                for r in range(m):
                    for c in range(r + 1, m):
                        v = 0.5 * (R[r, c] + R[c, r])
                        R[r, c] = v
                        R[c, r] = v
                weight[0] = alpha * weight[0] + (1.0 - alpha)
                if safeguard:
                    for r in range(m):
                        for c in range(m):
                            Rw[r, c] = R[r, c] / weight[0]
                else:
                    Rw[:, :] = R
                if ints[0] + 1 > warmup and _solve_jittered(Rw, h, d):
                    for k in range(m):
                        d[k] *= 1.0 - alpha
                    sc = _limit_scale(theta, d, p) if safeguard else 1.0
                    for k in range(m):
                        theta[k] += sc * d[k]
                    theta[p] = max(theta[p], SIGMA2_FLOOR)
                    theta[p + 1] = min(max(theta[p + 1], NU_MIN), NU_MAX)
            else:
                ints[2] += 1
        ints[0] += 1
        for k in range(p - 1, 0, -1):
            buf[k] = buf[k - 1]
        buf[0] = xi
        ints[1] = min(ints[1] + 1, p)
        for k in range(m):
            thetas[i, k] = theta[k]
        if ints[1] >= p:
            nu = theta[p + 1]
            mu = 0.0
            for k in range(p):
                mu += theta[k] * _gamma(buf[k], nu)
            mu_next[i] = mu
    return thetas, mu_next


@njit
def rls_recursion(x, contiguous, alpha, warmup, phi, R, sums, buf, ints):
    """Exponentially weighted least squares for a Gaussian AR on raw values.

    ``sums = [weighted SSE, weight]`` for the residual variance.
    """
    n = x.shape[0]
    p = phi.shape[0]
    phis = np.empty((n, p))
    sigma2 = np.full(n, np.nan)
    mean_next = np.full(n, np.nan)
    d = np.empty(p)
    g = np.empty(p)
    for i in range(n):
        xi = x[i]
        if not contiguous[i]:
            ints[1] = 0
        if ints[1] >= p:
            eps = xi
            for k in range(p):
                eps -= phi[k] * buf[k]
            for r in range(p):
                for c in range(p):
                    R[r, c] = alpha * R[r, c] + (1.0 - alpha) * buf[r] * buf[c]
            if ints[0] + 1 > warmup:
                sums[0] = alpha * sums[0] + eps * eps
                sums[1] = alpha * sums[1] + 1.0
                for k in range(p):
                    g[k] = buf[k] * eps
                if _solve_jittered(R, g, d):
                    for k in range(p):
                        phi[k] += (1.0 - alpha) * d[k]
        ints[0] += 1
        for k in range(p - 1, 0, -1):
            buf[k] = buf[k - 1]
        buf[0] = xi
        ints[1] = min(ints[1] + 1, p)
        for k in range(p):
            phis[i, k] = phi[k]
        if sums[1] > 0.0:
            sigma2[i] = sums[0] / sums[1]
        if ints[1] >= p:
            mu = 0.0
            for k in range(p):
                mu += phi[k] * buf[k]
            mean_next[i] = mu
    return phis, sigma2, mean_next
