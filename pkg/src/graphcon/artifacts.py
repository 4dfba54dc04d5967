"""CSV/JSON emission, parameter checkpoints and the strict experiment config."""

from __future__ import annotations

import copy
import csv
import json
import math

import numpy as np


def fmt(x) -> str:
    """Shortest round-trip text for numbers; empty string for None."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header: list[str], rows) -> int:
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(row[k]) if isinstance(row, dict) else fmt(row[i])
                        for i, k in enumerate(header)])
            n += 1
    return n


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(o):
    # JSON has no inf/nan
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (float, np.floating)) and not math.isfinite(o):
        return str(float(o))
    return o


def write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(doc), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


# --- checkpoints ---------------------------------------------------------------

CHECKPOINT_FORMAT = "graphcon-params"


def save_checkpoint(path, arrays: dict, meta: dict | None = None) -> None:
    """Named float64 arrays with explicit shapes; floats are written with repr."""
    out = {}
    for name, a in arrays.items():
        a = np.asarray(a, dtype=np.float64)
        if not np.isfinite(a).all():
            raise ValueError(f"array {name!r} has non-finite entries")
        out[name] = {"shape": list(a.shape), "data": [float(t) for t in a.ravel()]}
    doc = {"format": CHECKPOINT_FORMAT, "version": 1, "meta": meta or {}, "arrays": out}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, default=_json_default)


def load_checkpoint(path) -> tuple[dict, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    arrays = {}
    for name, rec in doc["arrays"].items():
        data = np.array(rec["data"], dtype=np.float64)
        shape = tuple(rec["shape"])
        if data.size != int(np.prod(shape, dtype=np.int64)):
            raise ValueError(f"{path}: array {name!r} has {data.size} values for shape {shape}")
        arrays[name] = data.reshape(shape)
    return arrays, doc.get("meta", {})


# --- experiment config ------------------------------------------------------------


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "dataset": {
        "kind": "sbm",
        "num_nodes": 200,
        "num_communities": 2,
        "p_in": 0.1,
        "p_out": 0.01,
        "split_fractions": [0.6, 0.2, 0.2],
        "dir": None,
        "task": "classification",
    },
    "model": {"hidden_width": 16, "architecture": "graphcon"},
    "coupling": {"kind": "gcn", "share_weights": False, "leaky_slope": 0.2, "adjacency": "sym_gcn"},
    "integrator": {"dt": 1.0, "alpha": 0.5, "gamma": 1.0, "n_layers": 20, "activation": "relu",
                   "y0_mode": "copy_x0"},
    "train": {"optimizer": "adam", "lr": 0.01, "momentum": 0.9, "beta1": 0.9, "beta2": 0.999,
              "eps": 1e-8, "epochs": 100, "patience": None},
    "energy_profile": {"grid_width": 10, "grid_height": 10, "layers": 100, "width": 16,
                       "alphas": [0.0, 0.5], "gamma": 1.0, "dt": 1.0, "activation": "relu"},
    "depth_sweep": {"depths": [5, 10, 15, 20]},
    "sensitivity_sweep": {"n_layers": 10, "points": 11, "low": 0.0, "high": 2.0,
                          "min_value": 0.01, "fixed_alpha": 0.5, "fixed_gamma": 1.0},
    "checks": {"grad_bound_dt": None, "hidden_state_dt": 0.1},
}

# keys whose value may be null or a number
_NULLABLE = {("dataset", "dir"), ("train", "patience"), ("checks", "grad_bound_dt")}


def _check_type(path, default, value):
    if value is None:
        if tuple(path) in _NULLABLE:
            return
        raise ConfigError(f"{'.'.join(path)} must not be null")
    if default is None:
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, (int, float)):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{'.'.join(path)}: expected {type(default).__name__}, got {type(value).__name__}")


def _merge(base: dict, user: dict, path: list) -> dict:
    if not isinstance(user, dict):
        raise ConfigError(f"{'.'.join(path) or 'config'} must be an object")
    out = copy.deepcopy(base)
    for k, v in user.items():
        if k not in base:
            where = ".".join(path + [k])
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[k], dict):
            out[k] = _merge(base[k], v, path + [k])
        else:
            _check_type(path + [k], base[k], v)
            out[k] = v
    return out


def parse_config(user: dict | None) -> dict:
    """Defaults overlaid with ``user``; any unknown key raises :class:`ConfigError`."""
    return _merge(DEFAULTS, user or {}, [])


def load_config(path) -> dict:
    if path is None:
        return parse_config({})
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
    return parse_config(doc)
