"""Experiment configuration: defaults per command, JSON overrides, validation."""

from __future__ import annotations

import copy
import json
from pathlib import Path

from ..errors import ConfigError
from ..noise import build_noise_model

QVA_FIELDS = [0.270777, 0.192014, 0.0802803, 0.123018]

DEFAULTS: dict[str, dict] = {
    "learn": {
        "layout": {"kind": "cnot-ladder", "n": 4, "N": 4},
        "noise": {"local": {"kind": "dephasing", "epsilon": 0.01}, "crosstalk": {"kind": "model-a"}},
        "sige": {"kind": "dephasing", "epsilon": 0.01, "eta": 10.0, "k": 1},
        "method": "lbem-lsq",
        "training_factor": 3,
        "tables": "exact",
        "shots_per_entry": 1024,
    },
    "ecdf": {
        "layout": {"kind": "cnot-ladder", "n": 4, "N": 4},
        "noise": {"local": {"kind": "dephasing", "epsilon": 0.01}, "crosstalk": {"kind": "model-a"}},
        "sige": {"kind": "dephasing", "epsilon": 0.01, "eta": 10.0, "k": 1},
        "methods": ["none", "TEM_k2", "LBEM"],
        "training_factor": 3,
        "tables": "exact",
        "shots_per_entry": 1024,
        "count": 100,
        "M": 10000,
        "threshold": 0.3,
        "retry_cap": 100000,
    },
    "rescaling": {
        "sizes": [5, 6, 7, 8],
        "crosstalk_scale": 0.1,
        "training_factor": 3,
        "test_count": 20,
        "M": 10000,
        "descent": "mc",
        "descent_circuits": 64,
        "descent_shots": 1000,
        "iterations": 500,
    },
    "dqcp": {
        "theta_count": 10,
        "noise": {"local": {"kind": "depolarizing", "epsilon": 0.05}, "meas_flip": [0.02, 0.06]},
        "shots": 100000,
        "learn_shots": None,
    },
    "vqa": {
        "fields": QVA_FIELDS,
        "coupling": 1.0,
        "noise": {
            "local": {"kind": "biased", "epsilon": 0.04, "eta": 10.0},
            "crosstalk": {"kind": "cycle"},
            "damping_gamma": 0.002,
        },
        "sige": {"kind": "biased", "epsilon": 0.04, "eta": 10.0, "k": 1},
        "training_factor": 3,
        "modes": ["raw", "extrapolation", "lbem"],
        "boosts": [1.0, 2.0],
        "fit": "linear",
        "iterations": 150,
        "learning_rate": 0.1,
        "init_scale": 0.1,
    },
    "vqe-h2": {
        "coeff_file": None,
        "noise": {"local": {"kind": "depolarizing", "epsilon": 0.01}, "meas_flip": [0.02, 0.05]},
        "shots": 100000,
        "learn_shots": None,
    },
    "selftest": {
        "circuits": 20,
        "max_qubits": 4,
        "inner_product_factors": [3, 6],
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "noise":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(command: str, path: str | None) -> tuple[dict, bytes | None]:
    """Merged configuration and the raw bytes of the config file (if any)."""
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command {command!r}")
    raw = None
    over = {}
    if path is not None:
        try:
            raw = Path(path).read_bytes()
            over = json.loads(raw)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(over, dict):
            raise ConfigError("config must be a JSON object")
    unknown = set(over) - set(DEFAULTS[command]) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
    cfg = _merge(DEFAULTS[command], over)
    validate(command, cfg)
    return cfg, raw


def _positive_int(cfg, key):
    v = cfg[key]
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise ConfigError(f"{key} must be a positive integer")


def validate(command: str, cfg: dict):
    try:
        if "noise" in cfg:
            build_noise_model(cfg["noise"])
    except ValueError as exc:
        raise ConfigError(f"noise: {exc}") from None
    if "sige" in cfg:
        s = cfg["sige"]
        if s.get("kind") not in ("dephasing", "depolarizing", "biased"):
            raise ConfigError("sige.kind must be dephasing, depolarizing or biased")
        if s.get("k") not in (1, 2):
            raise ConfigError("sige.k must be 1 or 2")
    if "threshold" in cfg and not 0 <= cfg["threshold"] < 1:
        raise ConfigError("threshold must lie in [0, 1)")
    if "method" in cfg and cfg["method"] not in ("none", "tem", "lbem-lsq", "single-param", "lbem-product"):
        raise ConfigError(f"unknown method {cfg['method']!r}")
    if "methods" in cfg:
        bad = set(cfg["methods"]) - {"none", "TEM_k1", "TEM_k2", "LBEM", "single_param"}
        if bad:
            raise ConfigError(f"unknown methods {sorted(bad)}")
    if "tables" in cfg and cfg["tables"] not in ("exact", "shots"):
        raise ConfigError("tables must be 'exact' or 'shots'")
    for key in ("count", "M", "training_factor", "shots", "theta_count", "iterations", "test_count", "circuits"):
        if key in cfg:
            _positive_int(cfg, key)
    if command == "rescaling":
        if cfg["descent"] not in ("mc", "exact"):
            raise ConfigError("descent must be 'mc' or 'exact'")
        if any(not isinstance(s, int) or s < 2 for s in cfg["sizes"]):
            raise ConfigError("sizes must be integers >= 2")
    if command == "vqa":
        if cfg["fit"] not in ("linear", "richardson"):
            raise ConfigError("fit must be 'linear' or 'richardson'")
        if len(cfg["fields"]) != 4:
            raise ConfigError("fields must hold four values")
        if len(cfg["boosts"]) < 2 or cfg["boosts"][0] != 1.0:
            raise ConfigError("boosts must start at 1.0 and hold at least two points")
        bad = set(cfg["modes"]) - {"raw", "extrapolation", "lbem"}
        if bad:
            raise ConfigError(f"unknown modes {sorted(bad)}")
