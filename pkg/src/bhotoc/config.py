"""Run configuration: YAML loading, strict key checking and defaults.

A config has the blocks ``system``, ``state``, ``numerics``, ``task`` and
``output``.  Unknown keys are errors.  Values are resolved in the order
built-in defaults < config file < command-line flags, and the resolved
config is what the manifest records, so a manifest is itself a valid config.
"""
from __future__ import annotations

import copy
from typing import Any

import yaml


class ConfigError(ValueError):
    pass


COMMANDS = ("quantum-otoc", "classical-otoc", "cinf", "lyapunov", "poincare", "strobo",
            "families", "validate")

DEFAULTS: dict[str, dict[str, Any]] = {
    "system": {"L": None, "U": 0.0, "J": 1.0, "E": None, "delta": 0.0, "omega": 0.0},
    "state": {"kind": "coherent", "occupations": None, "phases": None, "point": None,
              "N": None, "n_max": None},
    "numerics": {"dt": 1e-3, "krylov_dim": 12, "norm_tol": 1e-8, "leakage_tol": 1e-10,
                 "propagator": "krylov", "samples": 10000, "seed": 0, "workers": 1, "weyl_corrected": True},
    "task": {},
    "output": {"dir": "out"},
}

TASK_DEFAULTS: dict[str, dict[str, Any]] = {
    "quantum-otoc": {"A": None, "B": None, "times": None},
    "classical-otoc": {"A": None, "B": None, "times": None},
    "cinf": {"A": None, "B": None, "n_traj": 512, "T": 2000.0, "burn_in": 100.0, "bins": None,
             "min_count": 8, "gradient": "local_linear", "bandwidth": 0.5, "spread": None,
             "max_excluded": 0.05},
    "lyapunov": {"T": 500.0, "renorm": 1.0},
    "poincare": {"T": 1000.0, "direction": -1},
    "strobo": {"n_periods": 200},
    "families": {"hamiltonian": "sqrt_well", "q0": 0.0, "q_target": 0.0, "t": None,
                 "p_min": -5.0, "p_max": 5.0, "steps": 1001},
    "validate": {},
}

# keys a manifest adds on top of a config; ignored when read back
MANIFEST_KEYS = ("command", "version", "results")


def load_yaml(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of blocks")
    return data


def _merge_block(name: str, defaults: dict, given) -> dict:
    if given is None:
        return dict(defaults)
    if not isinstance(given, dict):
        raise ConfigError(f"block '{name}' must be a mapping")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(unknown)}; "
                          f"allowed: {', '.join(sorted(defaults)) or '(none)'}")
    out = dict(defaults)
    out.update(given)
    return out


def resolve(command: str, raw: dict | None, overrides: dict | None = None) -> dict:
    """Merge defaults, a parsed config file and flag overrides for ``command``."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    raw = copy.deepcopy(raw or {})
    for key in MANIFEST_KEYS:
        raw.pop(key, None)
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown block(s): {', '.join(unknown)}; allowed: {', '.join(DEFAULTS)}")
    cfg = {}
    for name, defaults in DEFAULTS.items():
        if name == "task":
            defaults = TASK_DEFAULTS[command]
        cfg[name] = _merge_block(name, defaults, raw.get(name))
    for dotted, value in (overrides or {}).items():
        block, key = dotted.split(".")
        cfg[block][key] = value
    return cfg


def dump(cfg: dict, command: str, version: str, results: dict | None = None) -> str:
    doc = {"command": command, "version": version, **cfg}
    if results:
        doc["results"] = results
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")
