"""Run configuration: loading (JSON or TOML), schema validation and defaults."""
from __future__ import annotations

import copy
import json
import sys
from pathlib import Path

import jsonschema

from .errors import ConfigError
from .forecast import MODEL_PARAMS, MODELS, ModelSpec

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

SCHEMA_ID = "glnar-run-config/1"

# Hyperparameters for 10-minute offshore wind farm data, by mode.
MODE_DEFAULTS = {
    "point": {
        "metric": "rmse",
        "nar_recursive": {"p": 2, "alpha": 0.995},
        "nar_batch": {"p": 2},
        "glnar_batch": {"p": 2, "delta": 0.005},
        "glnar_recursive": {"p": 2, "alpha": 0.9994, "delta": 0.005},
    },
    "prob": {
        "metric": "crps",
        "nar_recursive": {"p": 2, "alpha": 0.983},
        "nar_batch": {"p": 2},
        "glnar_batch": {"p": 2, "delta": 0.006},
        "glnar_recursive": {"p": 2, "alpha": 0.9986, "delta": 0.004},
    },
}

_num_list = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_theta = {
    "type": "object",
    "required": ["phi", "sigma2", "nu"],
    "properties": {
        "phi": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "sigma2": {"type": "number", "exclusiveMinimum": 0},
        "nu": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}
_model_params = {
    "type": "object",
    "properties": {
        "p": {"type": "integer", "minimum": 1},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
    },
    "additionalProperties": False,
}
_timestamp = {"type": "string", "minLength": 10}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$id": SCHEMA_ID,
    "title": "glnar run configuration",
    "type": "object",
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "seed": {"type": "integer", "minimum": 0},
        "mode": {"enum": ["point", "prob"]},
        "point_rule": {"enum": ["median", "mean"]},
        "models": {"type": "array", "items": {"enum": list(MODELS)}, "uniqueItems": True},
        "out": {"type": "string"},
        "series": {"type": "string"},
        "farm_csv": {"type": "string"},
        "capacities": {"type": "string"},
        "resolution_minutes": {"type": "integer", "minimum": 1},
        "p": {"type": "integer", "minimum": 1},
        "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "train_end": _timestamp,
        "cv_end": _timestamp,
        "test_end": _timestamp,
        "model_params": {
            "type": "object",
            "propertyNames": {"enum": list(MODELS)},
            "additionalProperties": _model_params,
        },
        "selected": {"type": "string"},
        "grid": {
            "type": "object",
            "properties": {
                "p": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "delta": _num_list,
                "alpha": _num_list,
            },
            "additionalProperties": False,
        },
        "n_jobs": {"type": "integer", "minimum": 1},
        "exact_refit": {"type": ["boolean", "null"]},
        "batch": {
            "type": "object",
            "properties": {
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "simulate": {
            "type": "object",
            "required": ["theta", "n"],
            "properties": {
                "theta": _theta,
                "n": {"type": "integer", "minimum": 1},
                "burn_in": {"type": "integer", "minimum": 0},
                "start": _timestamp,
                "regime_switches": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["time", "theta"],
                        "properties": {"time": {"type": "integer", "minimum": 0}, "theta": _theta},
                        "additionalProperties": False,
                    },
                },
            },
            "additionalProperties": False,
        },
        "archives": {"type": "array", "items": {"type": "string"}},
        "baselines": {"type": "array", "items": {"enum": list(MODELS)}},
    },
    "additionalProperties": False,
}

DEFAULTS = {
    "schema": SCHEMA_ID,
    "seed": 0,
    "mode": "prob",
    "point_rule": "median",
    "models": list(MODELS),
    "out": "out",
    "resolution_minutes": 10,
    "n_jobs": 1,
    "exact_refit": None,
    "baselines": ["persistence", "climatology"],
}


def load(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        if path.suffix.lower() == ".toml":
            return tomllib.loads(text)
        return json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: cannot parse config ({exc})") from None


def validate(doc):
    """Raise ConfigError listing every schema violation."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"  {'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid configuration:\n" + "\n".join(lines))
    return doc


def resolve(doc, **overrides):
    """Validate, apply command-line overrides and fill defaults.

    Overrides with value None are ignored.
    """
    doc = copy.deepcopy(doc or {})
    validate(doc)
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    out = {**copy.deepcopy(DEFAULTS), **doc}
    validate(out)
    return out


def model_spec(cfg, name):
    """ModelSpec for ``name`` with precedence model_params > top-level keys > mode defaults.

    Top-level ``p`` applies to every model, ``delta`` to the GLNAR models and
    ``alpha`` to recursive GLNAR only.
    """
    params = dict(MODE_DEFAULTS[cfg["mode"]].get(name, {}))
    need = MODEL_PARAMS[name]
    if "p" in cfg and "p" in need:
        params["p"] = cfg["p"]
    if "delta" in cfg and "delta" in need:
        params["delta"] = cfg["delta"]
    if "alpha" in cfg and name == "glnar_recursive":
        params["alpha"] = cfg["alpha"]
    params.update(cfg.get("model_params", {}).get(name, {}))
    params = {k: v for k, v in params.items() if k in need}
    return ModelSpec(name, **params)


def metric_for(cfg):
    return MODE_DEFAULTS[cfg["mode"]]["metric"]


def write_resolved(cfg, path):
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
