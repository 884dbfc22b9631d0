import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from glnar.benchmarks import (
    EmpiricalPredictive,
    GaussianPredictive,
    NarState,
    QuantileTablePredictive,
    climatology,
    climatology_forecasts,
    nar_fit,
    nar_predict,
    persistence_forecasts,
    persistence_point,
    prob_persistence_forecasts,
    persistence_prob,
)
from glnar.data import PowerSeries
from glnar.errors import EstimationError
from glnar.metrics import crps, gaussian_crps, rmse

GRID = np.linspace(0, 1, 1001)


def _check_cdf(pred):
    F = pred.cdf(np.r_[-1e-9, GRID])
    assert np.all(F[:, 0] == 0.0) and np.all(F[:, -1] == 1.0)
    assert np.all(np.diff(F, axis=1) >= -1e-12)


def test_persistence_point():
    assert persistence_point(0.42) == 0.42
    s = PowerSeries.regular(np.full(50, 0.3))
    pred = persistence_forecasts(s, np.arange(1, 50))
    assert rmse(pred.point(), s.values[1:]) == 0.0


def test_prob_persistence_degenerate_and_clipped():
    pred = persistence_prob(0.4, np.zeros(20))
    np.testing.assert_array_equal(pred.quantile(np.array([0.1, 0.9]))[0], [0.4, 0.4])
    errs = np.linspace(-0.01, 0.05, 20)
    pred = persistence_prob(0.98, errs)
    members = pred.members[0]
    assert np.sum(members == 1.0) == np.sum(0.98 + errs >= 1.0)
    assert persistence_prob(0.5, np.zeros(5)).members.shape == (1, 1)
    _check_cdf(pred)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 0.95), arrays(float, 20, elements=st.floats(-0.04, 0.04)))
def test_prob_persistence_mean(x, errs):
    pred = persistence_prob(x, errs)
    assert pred.mean()[0] == pytest.approx(x + errs.mean(), abs=1e-12)


def test_prob_persistence_rolling():
    rng = np.random.default_rng(0)
    x = np.clip(np.cumsum(rng.normal(0, 0.02, 200)) + 0.5, 0, 1)
    s = PowerSeries.regular(x)
    targets = np.arange(1, 200)
    pred = prob_persistence_forecasts(s, targets, m=20)
    # first targets: fewer than 20 past errors -> point mass at the last value
    assert np.all(pred.members[:20] == x[:20, None])
    t = 150
    errs = np.diff(x)[t - 21 : t - 1]
    np.testing.assert_allclose(np.sort(pred.members[t - 1]), np.sort(np.clip(x[t - 1] + errs, 0, 1)))


def test_climatology_uniform():
    rng = np.random.default_rng(3)
    pred = climatology(rng.uniform(size=10_000))
    levels = np.linspace(0, 1, 101)
    assert np.max(np.abs(pred.table[0] - levels)) < 0.02
    flat = climatology(np.array([0.37]))
    assert np.all(flat.table == 0.37)
    assert flat.point()[0] == 0.37
    with pytest.raises(EstimationError):
        climatology(np.array([np.nan]))


def test_online_climatology_equals_batch():
    rng = np.random.default_rng(5)
    x = rng.uniform(size=300)
    s = PowerSeries.regular(x)
    targets = np.arange(120, 300, 7)
    online = climatology_forecasts(s, targets)
    for i, t in enumerate(targets):
        np.testing.assert_allclose(online.table[i], climatology(x[:t]).table[0], atol=1e-12)
    _check_cdf(online)


def test_noiseless_nar_recovery():
    x = 0.5 * 0.9 ** np.arange(80)
    st_ = nar_fit(x, 1)
    assert st_.phi[0] == pytest.approx(0.9, abs=1e-12)
    assert st_.sigma2 == pytest.approx(0.0, abs=1e-20)


def test_recursive_nar_matches_batch():
    rng = np.random.default_rng(7)
    x = np.empty(40_000)
    x[:2] = 0.5
    for t in range(2, x.size):
        x[t] = 0.03 + 1.2 * x[t - 1] - 0.26 * x[t - 2] + rng.normal(0, 0.05)
    s = PowerSeries.regular(x)
    batch = nar_fit(s, 2)
    _, traj = nar_fit(s, 2, "recursive", 0.999)
    np.testing.assert_allclose(traj.phis[-10_000:].mean(0), batch.phi, atol=0.02)
    with pytest.raises(EstimationError):
        nar_fit(s, 2, "recursive")


def test_nar_point_truncation_and_degenerate():
    st_ = NarState([1.05], 0.01)
    pred, point = nar_predict(st_, [1.0])
    assert point[0] == 1.0
    pm, _ = nar_predict(NarState([1.0], 0.0), [0.62])
    assert crps(pm, np.array([0.5])) == pytest.approx(0.12, abs=1e-15)


def test_gaussian_predictive_crps_matches_closed_form():
    pred = GaussianPredictive(np.array([0.5]), np.array([0.03**2]))
    for obs in (0.45, 0.5, 0.58):
        assert crps(pred, np.array([obs])) == pytest.approx(gaussian_crps(0.5, 0.03, obs), abs=1e-5)


def test_gaussian_predictive_censored_at_bounds():
    pred = GaussianPredictive(np.array([0.98]), np.array([0.05**2]))
    _check_cdf(pred)
    assert pred.cdf_left(np.array([1.0]))[0, 0] < 1.0
    assert pred.quantile(0.9)[0] == 1.0
    assert pred.point()[0] == pytest.approx(0.98)


@settings(max_examples=50, deadline=None)
@given(
    st.sampled_from(["empirical", "table", "gauss"]),
    arrays(float, 21, elements=st.floats(0, 1)),
)
def test_every_predictive_has_valid_cdf(kind, vals):
    if kind == "empirical":
        pred = EmpiricalPredictive(vals[None, :])
    elif kind == "table":
        pred = QuantileTablePredictive(np.linspace(0, 1, 21), np.sort(vals)[None, :])
    else:
        pred = GaussianPredictive(vals[:1], np.array([vals[1] * 0.1 + 1e-6]))
    _check_cdf(pred)
    q = pred.quantile(np.array([0.1, 0.5, 0.9]))
    assert np.all(np.diff(q, axis=1) >= 0) and np.all((q >= 0) & (q <= 1))


def test_quantile_table_validation():
    with pytest.raises(ValueError):
        QuantileTablePredictive(np.array([0.1, 1.0]), np.array([[0.2, 0.3]]))
    with pytest.raises(ValueError):
        QuantileTablePredictive(np.array([0.0, 1.0]), np.array([[0.4, 0.3]]))
