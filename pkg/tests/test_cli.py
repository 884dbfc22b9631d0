import csv
import hashlib
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from glnar.cli import run
from glnar.forecast import MODELS
from glnar.metrics import ForecastArchive, evaluate_archive

PIPELINE = ("simulate", "cv", "fit-batch", "fit-recursive", "forecast", "evaluate", "emit-plots")


def _config(tmp_path, out):
    doc = {
        "seed": 3,
        "mode": "prob",
        "out": str(out),
        "series": str(out / "series.csv"),
        "simulate": {"theta": {"phi": [1.36, -0.37], "sigma2": 0.11, "nu": 1.4}, "n": 3000,
                     "start": "2020-01-01T00:00:00"},
        "train_end": "2020-01-11T00:00:00",
        "cv_end": "2020-01-16T00:00:00",
        "test_end": "2020-01-21T23:50:00",
        "grid": {"p": [1, 2], "delta": [0.005], "alpha": [0.995, 0.999]},
        "exact_refit": False,
    }
    path = tmp_path / f"{out.name}.json"
    path.write_text(json.dumps(doc))
    return path


def _hashes(root):
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    out = tmp / "run"
    cfg = _config(tmp, out)
    codes = [run([cmd, "--config", str(cfg)]) for cmd in PIPELINE]
    return tmp, out, cfg, codes


def test_pipeline_completes(pipeline):
    _, out, _, codes = pipeline
    assert codes == [0] * len(PIPELINE)
    report = json.loads((out / "report.json").read_text())
    assert [m["model"] for m in report["models"]] == list(MODELS)
    for name in MODELS:
        assert (out / "archives" / f"{name}.csv").exists()
        assert (out / "archives" / f"{name}.npz").exists()
    for cmd in PIPELINE:
        assert (out / f"resolved_config.{cmd}.json").exists()
    for f in ("brier_curve.csv", "reliability.csv", "marginal_calibration.csv", "intervals.csv"):
        assert (out / "plots" / f).exists()
    selected = json.loads((out / "selected.json").read_text())
    assert set(selected) == set(MODELS)
    with open(out / "table.csv") as fh:
        rows = list(csv.DictReader(fh))
    by_model = {r["model"]: r for r in rows}
    assert float(by_model["persistence"]["crps_impr_vs_persistence"]) == 0.0
    assert float(by_model["glnar_recursive"]["crps_pct"]) < float(by_model["climatology"]["crps_pct"])


def test_reliability_csv_matches_metrics(pipeline):
    _, out, _, _ = pipeline
    with open(out / "plots" / "reliability.csv") as fh:
        rows = [r for r in csv.DictReader(fh) if r["model"] == "glnar_recursive"]
    rep = evaluate_archive(ForecastArchive.read(out / "archives" / "glnar_recursive.csv"))
    rel = rep.reliability
    assert len(rows) == rel["nominal"].size
    for r, nom, emp, lo, hi in zip(rows, rel["nominal"], rel["empirical"], rel["lower"], rel["upper"]):
        assert [float(r[k]) for k in ("nominal", "empirical", "band_lower", "band_upper")] == [nom, emp, lo, hi]


def test_rerun_is_byte_identical(pipeline, tmp_path):
    tmp, out, _, _ = pipeline
    before = _hashes(out)
    out2 = tmp_path / "run"
    cfg2 = _config(tmp_path, out2)
    for cmd in PIPELINE:
        assert run([cmd, "--config", str(cfg2)]) == 0
    after = _hashes(out2)
    assert set(after) == set(before)
    # resolved configs differ only by the output paths
    differ = sorted(k for k in before if before[k] != after[k])
    assert all(k.startswith("resolved_config.") for k in differ)
    for cmd in PIPELINE:
        a = json.loads((out / f"resolved_config.{cmd}.json").read_text())
        b = json.loads((out2 / f"resolved_config.{cmd}.json").read_text())
        assert {k: v for k, v in a.items() if k not in ("out", "series")} == \
               {k: v for k, v in b.items() if k not in ("out", "series")}


def test_missing_archive(tmp_path, capsys):
    cfg = tmp_path / "m.json"
    missing = tmp_path / "nowhere" / "glnar_batch.csv"
    cfg.write_text(json.dumps({"archives": [str(missing)], "out": str(tmp_path / "o")}))
    assert run(["evaluate", "--config", str(cfg)]) == 3
    err = capsys.readouterr().err
    assert str(missing) in err and err.startswith("glnar evaluate: glnar.")


def test_invalid_config(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"seed": -1, "models": ["arima"], "out": str(tmp_path / "o")}))
    assert run(["evaluate", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "seed" in err and "models/0" in err


def test_unknown_model_flag(tmp_path, capsys):
    assert run(["forecast", "--models", "persistence,arima", "--out", str(tmp_path)]) == 2
    assert "arima" in capsys.readouterr().err


def test_missing_split_keys(tmp_path, capsys, pipeline):
    _, out, _, _ = pipeline
    cfg = tmp_path / "nosplit.json"
    cfg.write_text(json.dumps({"series": str(out / "series.csv"), "out": str(tmp_path / "o")}))
    assert run(["forecast", "--config", str(cfg)]) == 2
    assert "train_end" in capsys.readouterr().err


def test_flags_override_config(pipeline, tmp_path):
    _, out, _, _ = pipeline
    cfg = tmp_path / "f.json"
    shutil.copy(out / "series.csv", tmp_path / "series.csv")
    cfg.write_text(json.dumps({"series": str(tmp_path / "series.csv"), "train_end": "2020-01-11T00:00:00",
                               "cv_end": "2020-01-16T00:00:00", "test_end": "2020-01-21T23:50:00"}))
    o = tmp_path / "flags"
    assert run(["forecast", "--config", str(cfg), "--models", "persistence", "--mode", "point",
                "--seed", "9", "--out", str(o)]) == 0
    resolved = json.loads((o / "resolved_config.forecast.json").read_text())
    assert resolved["models"] == ["persistence"] and resolved["mode"] == "point" and resolved["seed"] == 9
    assert [p.name for p in sorted((o / "archives").glob("*.csv"))] == ["persistence.csv"]


def test_ingest(tmp_path):
    farm = tmp_path / "farm.csv"
    farm.write_text("timestamp,A,B\n2020-01-01T00:00:00Z,1800,\n2020-01-01T00:10:00Z,3600,900\n")
    caps = tmp_path / "caps.csv"
    caps.write_text("turbine,nominal_kw\nA,3600\nB,1800\n")
    cfg = tmp_path / "i.json"
    cfg.write_text(json.dumps({"farm_csv": str(farm), "capacities": str(caps), "out": str(tmp_path / "o")}))
    assert run(["ingest", "--config", str(cfg)]) == 0
    lines = (tmp_path / "o" / "series.csv").read_text().splitlines()
    assert lines == ["timestamp,value", "2020-01-01T00:00:00Z,0.5", "2020-01-01T00:10:00Z,0.75"]


def test_console_script(tmp_path):
    exe = shutil.which("glnar")
    cmd = [exe] if exe else [sys.executable, "-m", "glnar.cli"]
    res = subprocess.run(cmd + ["evaluate", "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 5
    assert "no forecast archives" in res.stderr
