"""Acceptance criteria A1-A8.

Each test prints one ``A# PASS/FAIL`` line (also collected in the terminal
summary). Run alone with ``pytest tests/test_acceptance.py -v -s``.
"""
import time

import numpy as np
import pytest

from glnar.batch import build_design, fit_batch, negloglik, nu_curvature, nu_score
from glnar.benchmarks import GaussianPredictive
from glnar.cv import Grid, cross_validate
from glnar.forecast import ModelSpec, model_archive, period_targets
from glnar.gln import GlnPredictive, ThetaState, log_density
from glnar.kernels.numpy_impl import _gamma
from glnar.metrics import (
    STANDARD_LEVELS,
    ForecastArchive,
    brier_curve,
    crps,
    crps_records,
    evaluate_archive,
    gaussian_crps,
    marginal_calibration,
    reliability,
)
from glnar.predictive import PointMassPredictive
from glnar.recursive import RecursiveConfig, RecursiveState, run_series, score_vector
from glnar.simulate import SimSpec, simulate

PHI = (1.36, -0.37)
TRUTH = ThetaState(PHI, 0.11, 1.4)


# ---- A1 ---------------------------------------------------------------------


def _logf(theta, x, lags):
    p = theta.size - 2
    return log_density(x, theta[:p] @ _gamma(np.asarray(lags), theta[p + 1]), theta[p], theta[p + 1])


def _rel(a, b, floor=1e-3):
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


def test_a1_score_correctness(criterion):
    rng = np.random.default_rng(2024)
    worst_h = worst_g = worst_c = 0.0
    for _ in range(100):
        p = int(rng.integers(1, 4))
        theta = np.concatenate([rng.uniform(-0.6, 0.9, p), [rng.uniform(0.05, 1.0), rng.uniform(0.5, 2.5)]])
        x, lags = rng.uniform(0.02, 0.98), rng.uniform(0.02, 0.98, p)
        state = RecursiveState(RecursiveConfig(p=p), theta=theta.copy())
        state.lags[:] = lags
        state.n_buffered = p
        fd = np.empty_like(theta)
        for k in range(theta.size):
            e = np.zeros_like(theta)
            e[k] = 1e-6 * max(1.0, abs(theta[k]))
            fd[k] = (_logf(theta + e, x, lags) - _logf(theta - e, x, lags)) / (2 * e[k])
        worst_h = max(worst_h, _rel(score_vector(state, x), fd))

        # nu derivatives of the batch objective on a short random record
        xs = rng.uniform(0.02, 0.98, 60)
        th = ThetaState(theta[:p], theta[p], theta[p + 1])

        def nll(nu):
            return negloglik(build_design(xs, p, nu), ThetaState(th.phi, th.sigma2, nu))

        def score(nu):
            return nu_score(build_design(xs, p, nu), ThetaState(th.phi, th.sigma2, nu))

        h = 1e-5 * th.nu
        d = build_design(xs, p, th.nu)
        worst_g = max(worst_g, _rel(nu_score(d, th), (nll(th.nu + h) - nll(th.nu - h)) / (2 * h)))
        worst_c = max(worst_c, _rel(nu_curvature(d, th), (score(th.nu + h) - score(th.nu - h)) / (2 * h)))
    ok = worst_h < 1e-6 and worst_g < 1e-6 and worst_c < 1e-5
    criterion("A1", ok, f"max rel err: score {worst_h:.1e}, nu_score {worst_g:.1e}, nu_curvature {worst_c:.1e}")
    assert ok


# ---- A2 ---------------------------------------------------------------------


def test_a2_batch_recovery(criterion):
    # simulated values lie strictly inside (0, 1): the fits use the raw series,
    # because clipping at delta censors mass of this bound-hugging law and
    # shifts the estimates by more than the tolerances
    t0 = time.perf_counter()
    hits, monotone = 0, True
    worst = np.zeros(3)
    for seed in range(20):
        series = simulate(SimSpec(TRUTH, 50_000, seed=500 + seed)).series
        fit = fit_batch(series, 2)
        th = fit.theta
        err = np.array([abs(th.nu - 1.4), np.max(np.abs(th.phi - PHI)), abs(th.sigma2 - 0.11)])
        worst = np.maximum(worst, err)
        hits += bool(err[0] <= 0.05 and err[1] <= 0.02 and err[2] <= 0.005)
        trace = np.asarray(fit.nll_trace)
        monotone &= bool(np.all(np.diff(trace) <= 1e-12 * np.abs(trace[:-1])))
    dt = time.perf_counter() - t0
    ok = hits >= 19 and monotone and dt < 120
    criterion("A2", ok, f"{hits}/20 within tolerance, NLL non-increasing: {monotone}, "
                        f"worst |err| nu {worst[0]:.3f} phi {worst[1]:.3f} sigma2 {worst[2]:.4f}, {dt:.0f}s")
    assert ok


# ---- A3 ---------------------------------------------------------------------


def test_a3_recursive_batch_consistency(criterion):
    t0 = time.perf_counter()
    series = simulate(SimSpec(TRUTH, 100_000, seed=0)).series
    batch = fit_batch(series, 2).theta.as_vector()
    run = run_series(series, RecursiveConfig(p=2, alpha=0.999))
    avg = run.thetas[-10_000:].mean(axis=0)
    diff = np.abs(avg - batch)
    dt = time.perf_counter() - t0
    ok = bool(np.all(diff <= 0.05)) and dt < 60
    criterion("A3", ok, f"max |mean recursive - batch| = {diff.max():.4f} "
                        f"(phi1, phi2, sigma2, nu: {np.array2string(diff, precision=4)}), {dt:.0f}s")
    assert ok


# ---- A4 ---------------------------------------------------------------------


def test_a4_adaptivity(criterion):
    t0 = time.perf_counter()
    n, switch = 60_000, 30_000
    spec = SimSpec(ThetaState(PHI, 0.11, 1.2), n, seed=0,
                   regime_switches=[(switch, ThetaState(PHI, 0.11, 1.8))])
    series = simulate(spec).series
    parts, ok = [], True
    for alpha in (0.995, 0.999):
        cfg = RecursiveConfig(p=2, alpha=alpha)
        nu = run_series(series, cfg).thetas[:, 3]
        after = np.flatnonzero(nu[switch:] >= 1.5)
        lag = int(after[0]) if after.size else None
        limit = 5 * cfg.n_alpha
        pre = float(nu[switch - int(cfg.n_alpha):switch].mean())
        good = lag is not None and lag <= limit and pre < 1.5
        ok &= good
        parts.append(f"alpha={alpha}: crossed after {lag} steps (limit {limit:.0f}, pre-switch mean {pre:.2f})")
    dt = time.perf_counter() - t0
    ok &= dt < 60
    criterion("A4", ok, "; ".join(parts) + f", {dt:.0f}s")
    assert ok


# ---- A5 ---------------------------------------------------------------------


def test_a5_crps_identity_and_oracle(criterion):
    rng = np.random.default_rng(55)
    sim = simulate(SimSpec(TRUTH, 5000, seed=3))
    y, x = sim.y, sim.series.values[2:]
    mu = PHI[0] * y[1:-1] + PHI[1] * y[:-2]
    ts = sim.series.timestamps[2:]
    preds = {
        "glnar_batch": GlnPredictive(mu, 0.11, 1.4, delta=0.005),
        "nar_batch": GaussianPredictive(np.clip(sim.series.values[1:-1], 0, 1), np.full(x.size, 0.003)),
        "persistence": PointMassPredictive(sim.series.values[1:-1]),
    }
    gap_identity = 0.0
    for name, pred in preds.items():
        rep = evaluate_archive(ForecastArchive.from_predictive(name, ts, x, pred))
        gap_identity = max(gap_identity, abs(rep.crps - rep.brier_integral))

    gap_gauss = 0.0
    n_cases = 0
    while n_cases < 50:
        m, s, obs = rng.uniform(0.1, 0.9), rng.uniform(0.005, 0.15), rng.uniform(0, 1)
        if min(m, 1 - m) < 5 * s:  # keep the Gaussian effectively inside [0, 1]
            continue
        num = crps(GaussianPredictive(np.array([m]), np.array([s * s])), np.array([obs]))
        gap_gauss = max(gap_gauss, abs(num - gaussian_crps(m, s, obs)))
        n_cases += 1

    loc, obs = rng.uniform(size=500), rng.uniform(size=500)
    exact = bool(np.array_equal(crps_records(PointMassPredictive(loc), obs), np.abs(loc - obs)))
    ok = gap_identity < 2e-4 and gap_gauss < 1e-4 and exact
    criterion("A5", ok, f"|CRPS - int BS| max {gap_identity:.1e}, Gaussian closed form max gap {gap_gauss:.1e}, "
                        f"point mass exact: {exact}")
    assert ok


# ---- A6 ---------------------------------------------------------------------


def test_a6_ranking_on_bound_hugging_data(criterion):
    # GLN truth alternating every 5000 steps between a tight, nu<1 regime and a
    # wide, nu>1 regime; ~15% of values below 0.05 and ~18% above 0.95
    t0 = time.perf_counter()
    n, seg = 40_000, 5000
    regimes = [ThetaState(PHI, 0.05, 0.7), ThetaState(PHI, 0.3, 1.8)]
    switches = [(k * seg, regimes[k % 2]) for k in range(1, n // seg)]
    series = simulate(SimSpec(regimes[0], n, seed=0, regime_switches=switches)).series
    targets = period_targets(series, n // 2, n, 2)
    thresholds = np.r_[np.arange(1, 6), np.arange(95, 100)] / 100
    specs = [
        ModelSpec("glnar_recursive", p=2, alpha=0.998, delta=0.005),
        ModelSpec("glnar_batch", p=2, delta=0.005),
        ModelSpec("nar_recursive", p=2, alpha=0.99),
        ModelSpec("nar_batch", p=2),
    ]
    score, brier = {}, {}
    for spec in specs:
        arch, _ = model_archive(spec, series, targets)
        score[spec.name] = arch.crps()
        brier[spec.name] = brier_curve(arch.distribution(), arch.observations, thresholds)
    gln = np.maximum(brier["glnar_recursive"], brier["glnar_batch"])
    gauss = np.minimum(brier["nar_recursive"], brier["nar_batch"])
    rank = score["glnar_recursive"] < score["glnar_batch"] and score["glnar_recursive"] < score["nar_recursive"]
    below = bool(np.all(gln < gauss))
    dt = time.perf_counter() - t0
    ok = rank and below and dt < 300
    pct = ", ".join(f"{k} {100 * v:.3f}" for k, v in score.items())
    criterion("A6", ok, f"CRPS % {pct}; GLN Brier below Gaussian at all tail thresholds: {below} "
                        f"(worst ratio {np.max(gln / gauss):.2f}), {dt:.0f}s")
    assert ok


# ---- A7 ---------------------------------------------------------------------


def test_a7_calibration_of_true_model(criterion):
    t0 = time.perf_counter()
    sim = simulate(SimSpec(TRUTH, 20_000, seed=7))
    y, x = sim.y, sim.series.values[2:]
    pred = GlnPredictive(PHI[0] * y[1:-1] + PHI[1] * y[:-2], TRUTH.sigma2, TRUTH.nu)
    rel = reliability(pred.quantile(STANDARD_LEVELS), x)
    inside = (rel["empirical"] >= rel["lower"]) & (rel["empirical"] <= rel["upper"])
    gap = float(np.max(np.abs(marginal_calibration(pred, x)["difference"])))
    dt = time.perf_counter() - t0
    ok = bool(np.all(inside)) and gap < 0.01 and dt < 120
    criterion("A7", ok, f"{int(inside.sum())}/{inside.size} levels inside 99% bands, "
                        f"sup marginal-calibration gap {gap:.4f}, {dt:.0f}s")
    assert ok


# ---- A8 ---------------------------------------------------------------------


def _select_p(seed):
    series = simulate(SimSpec(TRUTH, 100_000, seed=seed)).series
    grid = Grid(p_values=range(1, 6), delta_values=[0.005], alpha_values=[0.999], metric="rmse")
    return cross_validate(series, "glnar_recursive", grid, 50_000, 100_000).selected["spec"].p


def test_a8_cv_recovers_lag_order(criterion):
    t0 = time.perf_counter()
    chosen = [_select_p(1000 + k) for k in range(20)]
    hits = sum(p == 2 for p in chosen)
    repeat = _select_p(1000) == chosen[0] and _select_p(1003) == chosen[3]
    dt = time.perf_counter() - t0
    ok = hits >= 18 and repeat and dt < 600
    criterion("A8", ok, f"p=2 selected in {hits}/20 (choices {chosen}), deterministic: {repeat}, {dt:.0f}s")
    assert ok
