import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from glnar.errors import DomainError
from glnar.gln import (
    GlnPredictive,
    ThetaState,
    density,
    inverse_transform,
    log_density,
    nu_derivatives,
    predictive_cdf,
    predictive_point,
    predictive_quantile,
    transform,
)

unit = st.floats(1e-6, 1 - 1e-6)
shape = st.floats(0.5, 3.0)


def test_transform_values():
    assert transform(0.5, 1.0) == 0.0
    assert transform(0.5, 2.0) == pytest.approx(math.log(0.25 / 0.75), abs=1e-14)
    with pytest.raises(DomainError):
        transform(0.0, 1.3)
    with pytest.raises(DomainError):
        transform(1.0, 1.3)


def test_inverse_transform_values():
    assert inverse_transform(0.0, 1.0) == pytest.approx(0.5)
    assert inverse_transform(-1.0986122886681098, 2.0) == pytest.approx(0.5, abs=1e-12)
    assert inverse_transform(transform(0.3, 1.39), 1.39) == pytest.approx(0.3, abs=1e-12)


def test_transform_near_bounds_is_finite():
    x = np.array([1e-12, 0.004, 0.996, 1 - 1e-12])
    y = transform(x, 1.39)
    assert np.all(np.isfinite(y))
    assert np.all(np.diff(y) > 0)
    np.testing.assert_allclose(inverse_transform(y, 1.39), x, rtol=1e-9)


@settings(max_examples=200, deadline=None)
@given(unit, shape)
def test_round_trip(x, nu):
    assert inverse_transform(transform(x, nu), nu) == pytest.approx(x, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(unit, unit, shape)
def test_transform_increasing(a, b, nu):
    if a == b:
        return
    lo, hi = min(a, b), max(a, b)
    assert transform(lo, nu) < transform(hi, nu)


def test_density_value():
    assert density(0.5, 0.0, 1.0, 1.0) == pytest.approx(4.0 / math.sqrt(2 * math.pi), rel=1e-12)


def _mass(mu, s2, nu):
    # integrate on the logit scale so the endpoint spikes become smooth tails
    def f(z):
        x = 1.0 / (1.0 + math.exp(-z))
        return density(x, mu, s2, nu) * x * (1 - x)

    val, _ = integrate.quad(f, -35, 35, limit=400, epsabs=1e-12, epsrel=1e-12)
    return val


def test_density_integrates_to_one():
    assert _mass(0.0, 0.11, 1.39) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("mu", [-3.0, 0.0, 3.0])
@pytest.mark.parametrize("s2", [0.01, 0.3, 1.0])
@pytest.mark.parametrize("nu", [0.5, 1.0, 3.0])
def test_density_mass_grid(mu, s2, nu):
    assert _mass(mu, s2, nu) == pytest.approx(1.0, abs=1e-6)


def test_logit_normal_special_case(rng):
    x = rng.uniform(0.01, 0.99, 50)
    mu, s2 = 0.3, 0.4
    z = np.log(x / (1 - x))
    ref = np.exp(-((z - mu) ** 2) / (2 * s2)) / np.sqrt(2 * np.pi * s2) / (x * (1 - x))
    np.testing.assert_allclose(density(x, mu, s2, 1.0), ref, rtol=1e-12)
    # reflection symmetry holds only at nu = 1
    np.testing.assert_allclose(density(1 - x, -mu, s2, 1.0), density(x, mu, s2, 1.0), rtol=1e-12)
    assert not np.allclose(density(1 - x, -mu, s2, 1.7), density(x, mu, s2, 1.7), rtol=1e-3)


def test_nu_derivatives_finite_differences():
    x, nu, h = 0.3, 1.4, 1e-5
    u, v = nu_derivatives(x, nu)
    fd_u = (transform(x, nu + h) - transform(x, nu - h)) / (2 * h)
    fd_v = (nu_derivatives(x, nu + h)[0] - nu_derivatives(x, nu - h)[0]) / (2 * h)
    assert abs(u - fd_u) / abs(u) < 1e-6
    assert abs(v - fd_v) / abs(v) < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.99), shape)
def test_nu_derivatives_property(x, nu):
    h = 1e-5 * nu
    u, v = nu_derivatives(x, nu)
    fd_u = (transform(x, nu + h) - transform(x, nu - h)) / (2 * h)
    fd_v = (nu_derivatives(x, nu + h)[0] - nu_derivatives(x, nu - h)[0]) / (2 * h)
    assert abs(u - fd_u) <= 1e-6 * abs(u) + 1e-9
    assert abs(v - fd_v) <= 1e-6 * abs(v) + 1e-9


def test_nu_derivatives_small_nu_bounded():
    x = np.exp(-1.0)
    for nu in (1e-3, 1e-2, 0.1, 1.0, 20.0):
        u, v = nu_derivatives(x, nu)
        assert math.isfinite(u) and math.isfinite(v)


def test_predictive_cdf_basics():
    mu, s2, nu = 0.4, 0.2, 1.3
    pred = GlnPredictive(mu, s2, nu)
    x_med = inverse_transform(mu, nu)
    assert predictive_cdf(pred, x_med) == pytest.approx(0.5, abs=1e-12)
    assert predictive_cdf(pred, 0.0) == 0.0
    assert predictive_cdf(pred, 1.0) == 1.0
    with pytest.raises(DomainError):
        predictive_cdf(pred, 1.2)


def test_predictive_cdf_matches_monte_carlo(rng):
    mu, s2, nu = -0.5, 0.3, 1.6
    draws = inverse_transform(rng.normal(mu, math.sqrt(s2), 50_000), nu)
    grid = np.linspace(0, 1, 401)
    emp = np.searchsorted(np.sort(draws), grid, side="right") / draws.size
    model = GlnPredictive(mu, s2, nu).cdf(grid)[0]
    assert np.max(np.abs(emp - model)) < 0.01


def test_quantiles():
    pred = GlnPredictive(0.2, 0.15, 1.4)
    assert predictive_quantile(pred, 0.5) == pytest.approx(inverse_transform(0.2, 1.4))
    taus = np.linspace(0.01, 0.99, 99)
    q = pred.quantile(taus)[0]
    assert np.all(np.diff(q) > 0)
    lo, hi = predictive_quantile(pred, 0.025), predictive_quantile(pred, 0.975)
    assert lo < predictive_point(pred) < hi
    np.testing.assert_allclose(pred.cdf(np.array([[lo, hi]]))[0], [0.025, 0.975], atol=1e-12)
    with pytest.raises(DomainError):
        pred.quantile(1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(0.01, 1.0), shape)
def test_predictive_cdf_monotone(mu, s2, nu):
    F = GlnPredictive(mu, s2, nu).cdf(np.linspace(-0.1, 1.1, 301))[0]
    assert np.all(np.diff(F) >= 0)
    assert F[0] == 0.0 and F[-1] == 1.0
    assert np.all((F >= 0) & (F <= 1))


def test_point_forecasts(rng):
    assert predictive_point(GlnPredictive(0.0, 0.4, 1.0)) == pytest.approx(0.5)
    for mu, s2, nu in [(0.5, 0.3, 1.4), (-1.0, 0.8, 0.7), (2.0, 0.05, 2.5)]:
        pred = GlnPredictive(mu, s2, nu)
        mc = inverse_transform(rng.normal(mu, math.sqrt(s2), 200_000), nu).mean()
        assert predictive_point(pred, "mean") == pytest.approx(mc, abs=1e-3)
    # median below the coarsening threshold is reported at the bound
    low = GlnPredictive(transform(0.003, 1.2), 0.1, 1.2, delta=0.005)
    high = GlnPredictive(transform(0.998, 1.2), 0.1, 1.2, delta=0.005)
    assert predictive_point(low) == 0.0
    assert predictive_point(high) == 1.0


def test_mean_matches_quadrature():
    mu, s2, nu = 0.7, 0.5, 1.8
    val, _ = integrate.quad(lambda x: x * density(x, mu, s2, nu), 0, 1, limit=400, points=[1e-6, 1 - 1e-6])
    assert predictive_point(GlnPredictive(mu, s2, nu), "mean") == pytest.approx(val, abs=1e-8)


def test_theta_state_validation():
    th = ThetaState([1.0, -0.2], 0.1, 1.3)
    assert th.p == 2
    np.testing.assert_array_equal(ThetaState.from_vector(th.as_vector()).as_vector(), th.as_vector())
    with pytest.raises(DomainError):
        ThetaState([0.5], 0.0, 1.0)
    with pytest.raises(DomainError):
        ThetaState([0.5], 0.1, -1.0)


def test_log_density_consistent():
    assert log_density(0.2, 0.1, 0.3, 1.7) == pytest.approx(math.log(density(0.2, 0.1, 0.3, 1.7)))
