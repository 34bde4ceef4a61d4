"""Experiment configuration: one YAML file, every default in one place.

Sections mirror the pipeline stages. ``load_config`` merges a user file
over the defaults and rejects unknown keys, so a typo cannot silently
fall back to a default.
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .dataio import ACTIVITIES, PROTOCOLS

DEFAULTS = {
    "seed": 0,
    "window_seconds": 1,
    "protocol": "LOCOCV",
    "evaluate_synthetic": True,
    "mq": {
        "codebook_size": 1028,
        "token_width": 512,
        "hidden": 256,
        "alpha": 0.99,
        "beta": 0.25,
        "dropout_p": 0.2,
    },
    "p2p": {
        "lambda": 0.5,
        "scheduled_sampling": 0.0,
    },
    "train": {
        "batch": 32,
        "lr": 1e-4,
        "weight_decay": 1e-5,
        "max_epochs": 200,
        "patience": 15,
        "lr_schedule": "cosine",
        "validation_fraction": 0.1,
    },
    "simulation": {
        "chairs": ["office", "foldable", "wheelchair"],
        "subjects": ["s1", "s2", "s3", "s4"],
        "activities": list(ACTIVITIES),
        "clip_seconds": 15.0,
        "takes": 1,
        "noise": 0.01,
        "workers": 1,
    },
    "metrics": {
        "r_precision_pool": 32,
        "r_precision_k": 3,
    },
    "posture": {
        "slouch_deg": 20.0,
    },
    "har": {
        "window_seconds": 2.0,
        "overlap": 0.5,
    },
    "paths": {
        "corpus": "runs/corpus",
        "checkpoints": "runs/checkpoints",
        "reports": "runs/reports",
    },
}


class ConfigError(ValueError):
    pass


def _merge(base, override, where=""):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key} must be a mapping")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def validate(cfg):
    if cfg["window_seconds"] not in (1, 2, 5):
        raise ConfigError("window_seconds must be 1, 2 or 5")
    if cfg["protocol"] not in PROTOCOLS:
        raise ConfigError(f"protocol must be one of {PROTOCOLS}")
    if not 0 <= cfg["mq"]["dropout_p"] < 1:
        raise ConfigError("mq.dropout_p must lie in [0, 1)")
    if not 0 < cfg["mq"]["alpha"] < 1:
        raise ConfigError("mq.alpha must lie in (0, 1)")
    if cfg["train"]["lr_schedule"] != "cosine":
        raise ConfigError("only the cosine learning-rate schedule is implemented")
    for a in cfg["simulation"]["activities"]:
        if a not in ACTIVITIES:
            raise ConfigError(f"unknown activity {a!r}")
    return cfg


def load_config(path=None, overrides=None):
    """Defaults, then the YAML file at ``path``, then ``overrides`` (nested dict)."""
    user = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            user = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{p} must hold a mapping")
    cfg = _merge(DEFAULTS, user)
    cfg = _merge(cfg, overrides or {})
    return validate(cfg)


def dump_config(cfg):
    return yaml.safe_dump(cfg, sort_keys=True)


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def set_dotted(d, dotted, value):
    """``set_dotted(cfg, "train.lr", 1e-3)`` on a nested dict (returns a new nested override)."""
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
    cur[keys[-1]] = value
    return d
