"""Power time series: ingestion, aggregation, coarsening and splitting.

Series live on a regular time grid (10 min by default). Missing cells in
per-turbine data are NaN; after aggregation, timestamps with no available
turbine are dropped, so gaps show up as jumps in the timestamp vector.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ParseError

SNAP_TOL = 1e-6
DEFAULT_RESOLUTION = np.timedelta64(10, "m")


def parse_timestamp(text):
    """ISO-8601 string to a naive-UTC ``datetime64[s]``."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(dt, "s")


def format_timestamp(ts):
    return str(np.datetime64(ts, "s")) + "Z"


def as_timestamp(value):
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[s]")
    return parse_timestamp(str(value))


@dataclass(frozen=True)
class PowerSeries:
    """Timestamped values in [0, 1] (NaN marks a missing value)."""

    timestamps: np.ndarray
    values: np.ndarray
    resolution: np.timedelta64 = DEFAULT_RESOLUTION
    name: str = ""

    def __post_init__(self):
        ts = np.asarray(self.timestamps).astype("datetime64[s]")
        vals = np.asarray(self.values, dtype=float)
        if ts.shape != vals.shape or ts.ndim != 1:
            raise DataError("timestamps and values must be 1-D arrays of equal length")
        if ts.size > 1 and np.any(np.diff(ts) <= np.timedelta64(0, "s")):
            raise DataError("timestamps must be strictly increasing (duplicate or unordered row)")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "resolution", np.timedelta64(self.resolution).astype("timedelta64[s]"))

    @classmethod
    def regular(cls, values, start="2000-01-01T00:00:00", resolution=DEFAULT_RESOLUTION, name=""):
        """Series on an unbroken grid starting at ``start``."""
        values = np.asarray(values, dtype=float)
        res = np.timedelta64(resolution).astype("timedelta64[s]")
        ts = as_timestamp(start) + res * np.arange(values.size)
        return cls(ts, values, res, name)

    def __len__(self):
        return self.values.size

    def replace(self, values=None, timestamps=None, name=None):
        return PowerSeries(
            self.timestamps if timestamps is None else timestamps,
            self.values if values is None else values,
            self.resolution,
            self.name if name is None else name,
        )

    def __getitem__(self, idx):
        return self.replace(values=self.values[idx], timestamps=self.timestamps[idx])

    def dropna(self):
        keep = ~np.isnan(self.values)
        return self[keep]

    def step_ok(self):
        """``ok[t]`` is True when record t follows record t-1 by one resolution step."""
        ok = np.zeros(len(self), dtype=bool)
        if len(self) > 1:
            ok[1:] = np.diff(self.timestamps) == self.resolution
            ok[1:] &= ~np.isnan(self.values[1:]) & ~np.isnan(self.values[:-1])
        return ok

    def contiguous_run(self):
        """Number of contiguous predecessors available at each index."""
        ok = self.step_ok()
        idx = np.arange(len(self))
        last_break = np.maximum.accumulate(np.where(ok, 0, idx))
        return idx - last_break

    def lag_ok(self, p):
        """True where the p previous values exist and are contiguous."""
        return self.contiguous_run() >= p

    def gaps(self):
        """Indices t > 0 where record t does not follow t-1 contiguously."""
        ok = self.step_ok()
        return np.flatnonzero(~ok[1:]) + 1


@dataclass(frozen=True)
class CoarseningConfig:
    delta: float

    def __post_init__(self):
        if not (0.0 < self.delta < 0.5):
            raise ConfigError(f"delta must lie in (0, 0.5), got {self.delta}")


@dataclass(frozen=True)
class SplitConfig:
    train_end: np.datetime64
    cv_end: np.datetime64
    test_end: np.datetime64

    def __post_init__(self):
        for name in ("train_end", "cv_end", "test_end"):
            object.__setattr__(self, name, as_timestamp(getattr(self, name)))
        if not (self.train_end < self.cv_end < self.test_end):
            raise ConfigError("split boundaries must satisfy train_end < cv_end < test_end")

    @classmethod
    def from_config(cls, cfg):
        try:
            return cls(cfg["train_end"], cfg["cv_end"], cfg["test_end"])
        except KeyError as exc:
            raise ConfigError(f"missing split key {exc.args[0]!r}") from None


def _snap_unit(values, where=""):
    bad = (values < -SNAP_TOL) | (values > 1.0 + SNAP_TOL)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DataError(f"value {values[i]!r} outside [0, 1] beyond tolerance{where}")
    return np.clip(values, 0.0, 1.0)


def read_capacities(path):
    """Two-column file ``turbine_id, nominal_kw``; header optional."""
    path = Path(path)
    caps = {}
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 columns, got {len(row)}", lineno, path)
            tid, raw = row[0].strip(), row[1].strip()
            try:
                cap = float(raw)
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ParseError(f"non-numeric capacity {raw!r}", lineno, path) from None
            if not cap > 0:
                raise ConfigError(f"nominal power of turbine {tid!r} must be > 0")
            caps[tid] = cap
    return caps


def load_farm_csv(path, nominal_powers, resolution=DEFAULT_RESOLUTION):
    """Read a wide SCADA export and scale each turbine by its nominal power.

    Returns ``{turbine_id: PowerSeries}`` on the shared timestamp grid, NaN
    where a cell was empty.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1, path) from None
        turbines = [h.strip() for h in header[1:]]
        if not turbines:
            raise ParseError("no turbine columns in header", 1, path)
        unknown = [t for t in turbines if t not in nominal_powers]
        if unknown:
            raise ConfigError(f"no nominal power for turbine(s): {', '.join(unknown)}")
        caps = np.array([float(nominal_powers[t]) for t in turbines])
        if np.any(~(caps > 0)):
            raise ConfigError("nominal powers must be > 0")

        stamps, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} columns, got {len(row)}", lineno, path)
            try:
                stamps.append(parse_timestamp(row[0]))
            except ValueError:
                raise ParseError(f"bad timestamp {row[0]!r}", lineno, path) from None
            vals = []
            for cell in row[1:]:
                cell = cell.strip()
                if cell == "":
                    vals.append(math.nan)
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(f"non-numeric power value {cell!r}", lineno, path) from None
            rows.append(vals)

    ts = np.array(stamps, dtype="datetime64[s]")
    if ts.size > 1 and np.any(np.diff(ts) <= np.timedelta64(0, "s")):
        raise DataError(f"{path}: timestamps must be strictly increasing")
    raw = np.array(rows, dtype=float).reshape(len(rows), len(turbines))
    scaled = raw / caps[None, :]
    finite = ~np.isnan(scaled)
    scaled[finite] = _snap_unit(scaled[finite], f" in {path}")
    return {
        tid: PowerSeries(ts, scaled[:, j], resolution, tid) for j, tid in enumerate(turbines)
    }


def aggregate_turbines(series):
    """Per-timestamp mean over available turbines (equal weights)."""
    if isinstance(series, dict):
        series = list(series.values())
    series = list(series)
    if not series:
        raise ConfigError("no turbine series to aggregate")
    ts = series[0].timestamps
    for s in series[1:]:
        if s.timestamps.shape != ts.shape or np.any(s.timestamps != ts):
            raise DataError("turbine series do not share a timestamp grid")
    stack = np.vstack([s.values for s in series])
    count = np.sum(~np.isnan(stack), axis=0)
    keep = count > 0
    total = np.nansum(stack[:, keep], axis=0)
    return PowerSeries(ts[keep], total / count[keep], series[0].resolution, "farm")


def coarsen(series, config):
    """Clip values into [delta, 1 - delta]."""
    if not isinstance(config, CoarseningConfig):
        config = CoarseningConfig(float(config))
    d = config.delta
    if isinstance(series, PowerSeries):
        return series.replace(values=np.clip(series.values, d, 1.0 - d))
    return np.clip(np.asarray(series, dtype=float), d, 1.0 - d)


def split_indices(series, config):
    ts = series.timestamps
    i_train = int(np.searchsorted(ts, config.train_end, side="right"))
    i_cv = int(np.searchsorted(ts, config.cv_end, side="right"))
    i_test = int(np.searchsorted(ts, config.test_end, side="right"))
    return i_train, i_cv, i_test


def split(series, config):
    """Partition into (train, cv, test): ``t <= train_end < t <= cv_end < t <= test_end``."""
    a, b, c = split_indices(series, config)
    parts = (series[:a], series[a:b], series[b:c])
    for name, part in zip(("train", "cv", "test"), parts):
        if len(part) == 0:
            raise ConfigError(f"empty {name} partition")
    return parts


def write_series_csv(series, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "value"])
        for ts, v in zip(series.timestamps, series.values):
            w.writerow([format_timestamp(ts), "" if np.isnan(v) else repr(float(v))])


def read_series_csv(path, resolution=DEFAULT_RESOLUTION):
    """Read a two-column ``timestamp,value`` file (empty value = missing, dropped)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    stamps, vals = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and row[0].strip().lower() == "timestamp":
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 columns, got {len(row)}", lineno, path)
            try:
                ts = parse_timestamp(row[0])
            except ValueError:
                raise ParseError(f"bad timestamp {row[0]!r}", lineno, path) from None
            cell = row[1].strip()
            if cell == "":
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise ParseError(f"non-numeric value {cell!r}", lineno, path) from None
            stamps.append(ts)
    values = _snap_unit(np.array(vals, dtype=float), f" in {path}")
    return PowerSeries(np.array(stamps, dtype="datetime64[s]"), values, resolution, path.stem)
