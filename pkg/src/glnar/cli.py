"""Command-line interface: ``glnar <command> --config run.json [flags]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 estimation
error, 5 evaluation error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .batch import BatchOptions, fit_batch
from .cv import Grid, cross_validate
from .data import (
    SplitConfig,
    aggregate_turbines,
    as_timestamp,
    coarsen,
    load_farm_csv,
    read_capacities,
    read_series_csv,
    split_indices,
    write_series_csv,
)
from .errors import ConfigError, DataError, DomainError, EvaluationError, GlnarError
from .forecast import MODELS, ModelSpec, model_archive, period_targets
from .gln import ThetaState
from .metrics import ForecastArchive, attach_improvements, evaluate_archive, write_plot_csvs, write_report_json
from .recursive import RecursiveConfig, run_series, write_state
from .simulate import SimSpec, simulate

COMMANDS = ("ingest", "simulate", "fit-batch", "fit-recursive", "forecast", "evaluate", "cv", "emit-plots")


def _resolution(cfg):
    return np.timedelta64(int(cfg["resolution_minutes"]), "m")


def load_series(cfg):
    if "series" in cfg:
        return read_series_csv(cfg["series"], _resolution(cfg))
    if "farm_csv" in cfg and "capacities" in cfg:
        turbines = load_farm_csv(cfg["farm_csv"], read_capacities(cfg["capacities"]), _resolution(cfg))
        return aggregate_turbines(turbines)
    raise ConfigError("config needs 'series' or both 'farm_csv' and 'capacities'")


def _split(cfg, series):
    missing = [k for k in ("train_end", "cv_end", "test_end") if k not in cfg]
    if missing:
        raise ConfigError(f"config is missing split key(s): {', '.join(missing)}")
    sc = SplitConfig.from_config(cfg)
    a, b, c = split_indices(series, sc)
    for name, lo, hi in (("train", 0, a), ("cv", a, b), ("test", b, c)):
        if hi <= lo:
            raise ConfigError(f"empty {name} partition")
    return a, b, c


def _history_end(cfg, series):
    """Index bounding the fitting history: everything up to cv_end, or all data."""
    if "cv_end" in cfg:
        return int(np.searchsorted(series.timestamps, as_timestamp(cfg["cv_end"]), side="right"))
    return len(series)


def _theta(d):
    return ThetaState(d["phi"], d["sigma2"], d["nu"])


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _specs(cfg):
    selected = {}
    if "selected" in cfg:
        path = Path(cfg["selected"])
        if not path.exists():
            raise DataError(f"selection file not found: {path}")
        selected = json.loads(path.read_text())
    specs = []
    for name in cfg["models"]:
        if name in selected:
            specs.append(ModelSpec(**selected[name]))
        else:
            specs.append(cfgmod.model_spec(cfg, name))
    return specs


# ---- commands ---------------------------------------------------------------


def cmd_ingest(cfg, out):
    series = load_series(cfg)
    write_series_csv(series, out / "series.csv")
    summary = {
        "n": len(series),
        "start": str(series.timestamps[0]) if len(series) else None,
        "end": str(series.timestamps[-1]) if len(series) else None,
        "gaps": int(series.gaps().size),
        "share_at_zero": float(np.mean(series.values == 0.0)) if len(series) else None,
        "share_at_one": float(np.mean(series.values == 1.0)) if len(series) else None,
    }
    _dump(summary, out / "ingest_summary.json")
    return summary


def cmd_simulate(cfg, out):
    if "simulate" not in cfg:
        raise ConfigError("config has no 'simulate' section")
    sim = cfg["simulate"]
    spec = SimSpec(
        _theta(sim["theta"]),
        int(sim["n"]),
        seed=int(cfg["seed"]),
        burn_in=int(sim.get("burn_in", 1000)),
        regime_switches=[(int(s["time"]), _theta(s["theta"])) for s in sim.get("regime_switches", [])],
        start=sim.get("start", "2000-01-01T00:00:00"),
        resolution_minutes=int(cfg["resolution_minutes"]),
    )
    res = simulate(spec)
    write_series_csv(res.series, out / "series.csv")
    res.write_sidecar(out / "truth.json")
    return {"n": len(res.series), "seed": spec.seed}


def cmd_fit_batch(cfg, out):
    series = load_series(cfg)
    spec = cfgmod.model_spec(cfg, "glnar_batch")
    hist = series[: _history_end(cfg, series)]
    opts = BatchOptions(**cfg.get("batch", {}))
    fit = fit_batch(coarsen(hist, spec.delta), spec.p, opts)
    d = {**fit.to_dict(), "delta": spec.delta, "p": spec.p}
    _dump(d, out / "batch_fit.json")
    return {k: d[k] for k in ("phi", "sigma2", "nu", "iterations", "converged")}


def cmd_fit_recursive(cfg, out):
    series = load_series(cfg)
    spec = cfgmod.model_spec(cfg, "glnar_recursive")
    rc = RecursiveConfig(p=spec.p, alpha=spec.alpha, delta=spec.delta)
    run = run_series(coarsen(series, spec.delta), rc)
    run.write_trajectory(out / "trajectory.csv")
    write_state(run.state, out / "state.json")
    last = run.theta_at(len(series) - 1)
    return {"final": last.to_dict(), "n_skipped": run.n_skipped, "n_at_bounds": run.n_at_bounds}


def cmd_cv(cfg, out):
    series = load_series(cfg)
    a, b, _ = _split(cfg, series)
    g = cfg.get("grid", {})
    grid = Grid(
        p_values=g.get("p", Grid.p_values),
        delta_values=g.get("delta", Grid.delta_values),
        alpha_values=g.get("alpha", Grid.alpha_values),
        metric=cfgmod.metric_for(cfg),
    )
    p_max = grid.max_p(cfg["models"])
    cv_dir = out / "cv"
    cv_dir.mkdir(exist_ok=True)
    selected, summary = {}, {}
    for name in cfg["models"]:
        res = cross_validate(series, name, grid, a, b, cfg["point_rule"], cfg["n_jobs"], p_max,
                             cfg["exact_refit"])
        res.to_json(cv_dir / f"{name}.json")
        selected[name] = res.selected["spec"].params()
        summary[name] = {**selected[name], grid.metric: res.selected["metric"]}
    _dump(selected, out / "selected.json")
    return summary


def cmd_forecast(cfg, out):
    series = load_series(cfg)
    _, b, c = _split(cfg, series)
    specs = _specs(cfg)
    p_max = max(s.lags for s in specs)
    targets = period_targets(series, b, c, p_max)
    if targets.size == 0:
        raise ConfigError("test period has no usable targets")
    arch_dir = out / "archives"
    arch_dir.mkdir(exist_ok=True)
    summary = {}
    for spec in specs:
        arch, info = model_archive(spec, series, targets, cfg["point_rule"])
        arch.write(arch_dir / f"{spec.name}.csv")
        if "run" in info:
            traj = out / "trajectories"
            traj.mkdir(exist_ok=True)
            info["run"].write_trajectory(traj / f"{spec.name}.csv")
        summary[spec.name] = {**spec.params(), "n": len(arch)}
    _dump(summary, out / "forecast_models.json")
    return summary


def _archive_paths(cfg, out):
    if cfg.get("archives"):
        paths = [Path(p) for p in cfg["archives"]]
    else:
        paths = sorted((out / "archives").glob("*.csv"))
    for p in paths:
        if not p.exists():
            raise DataError(f"archive not found: {p}")
    if not paths:
        raise EvaluationError(f"no forecast archives given and none under {out / 'archives'}")
    return paths


def _reports(cfg, out):
    archives = [ForecastArchive.read(p) for p in _archive_paths(cfg, out)]
    order = {m: i for i, m in enumerate(MODELS)}
    archives.sort(key=lambda a: (order.get(a.model_id, len(order)), a.model_id))
    reports = [evaluate_archive(a) for a in archives]
    attach_improvements(reports, cfg["baselines"])
    return archives, reports


def cmd_evaluate(cfg, out):
    _, reports = _reports(cfg, out)
    write_report_json(reports, out / "report.json")
    baselines = [b for b in cfg["baselines"] if any(r.model_id == b for r in reports)]
    header = ["model", "n", "rmse_pct", "crps_pct"]
    header += [f"rmse_impr_vs_{b}" for b in baselines] + [f"crps_impr_vs_{b}" for b in baselines]
    rows = []
    for r in reports:
        row = [r.model_id, r.n, 100 * r.rmse, 100 * r.crps]
        row += [r.improvements.get("rmse", {}).get(b) for b in baselines]
        row += [r.improvements.get("crps", {}).get(b) for b in baselines]
        rows.append(row)
    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (v if isinstance(v, (str, int)) else f"{v:.4f}") for v in row])
    return {r.model_id: {"rmse_pct": round(100 * r.rmse, 4), "crps_pct": round(100 * r.crps, 4)} for r in reports}


def cmd_emit_plots(cfg, out):
    archives, reports = _reports(cfg, out)
    plots = write_plot_csvs(reports, archives, out / "plots")
    return {"plots": sorted(p.name for p in plots.iterdir())}


HANDLERS = {
    "ingest": cmd_ingest,
    "simulate": cmd_simulate,
    "fit-batch": cmd_fit_batch,
    "fit-recursive": cmd_fit_recursive,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "cv": cmd_cv,
    "emit-plots": cmd_emit_plots,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="glnar", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="run configuration (.json or .toml)")
    ap.add_argument("--seed", type=int, help="top-level random seed")
    ap.add_argument("--models", help="comma-separated model ids")
    ap.add_argument("--mode", choices=("point", "prob"), help="point or probabilistic forecasting")
    ap.add_argument("--out", help="output directory")
    return ap


def _origin(exc):
    """Module in which ``exc`` was raised, for error messages."""
    tb = exc.__traceback__
    name = None
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("glnar"):
            name = mod
        tb = tb.tb_next
    return name or "glnar"


def run(argv=None):
    args = build_parser().parse_args(argv)
    try:
        doc = cfgmod.load(args.config) if args.config else {}
        models = None
        if args.models:
            models = [m.strip() for m in args.models.split(",") if m.strip()]
            unknown = [m for m in models if m not in MODELS]
            if unknown:
                raise ConfigError(f"unknown model(s): {', '.join(unknown)}")
        cfg = cfgmod.resolve(doc, seed=args.seed, models=models, mode=args.mode, out=args.out)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        cfgmod.write_resolved(cfg, out / f"resolved_config.{args.command}.json")
        summary = HANDLERS[args.command](cfg, out)
        print(json.dumps(summary, indent=2, sort_keys=True, default=str))
        return 0
    except GlnarError as exc:
        print(f"glnar {args.command}: {_origin(exc)}: {exc}", file=sys.stderr)
        return exc.exit_code
    except DomainError as exc:
        print(f"glnar {args.command}: {_origin(exc)}: {exc}", file=sys.stderr)
        return DataError.exit_code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":  # pragma: no cover
    main()
