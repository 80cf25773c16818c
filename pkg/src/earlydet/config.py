"""Run configuration: one JSON document with flat sections per module.

Defaults: penalty weights 2/1, multitask weights 1/2/1, L2 at 1e-3, Adam at
1e-4, 25 epochs with batches 256/128, and 9 calibration folds on a 0.1
threshold grid. A config file overrides defaults; ``--set section.key=value``
flags override individual entries. Every artifact records the hash of the
fully resolved config.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .errors import ConfigurationError

DEFAULTS: dict = {
    "paths": {
        "out_dir": "runs/default",
        "train_manifest": "dataset/train_manifest.json",
        "test_manifest": "dataset/test_manifest.json",
        "checkpoint": "model.ckpt",
        "thresholds": "thresholds.json",
    },
    "features": {
        "sample_rate": 44100,
        "frame_s": 0.1,
        "hop_s": 0.01,
        "num_bands": 64,
        "min_freq": 50.0,
        "max_freq": 22050.0,
        "context": 5,
    },
    "synth": {
        "num_classes": 5,
        "train_streams": 9,
        "test_streams": 3,
        "stream_s": 120.0,
        "events_per_class": 5,
        "noise_level": 0.01,
        "min_gap_s": 0.4,
    },
    "weighted_loss": {"fg": 2.0, "bg": 1.0, "reg": 1e-3},
    "multitask_loss": {"class": 1.0, "dist": 2.0, "conf": 1.0, "reg": 1e-3},
    "training": {
        "epochs_dnn1": 25,
        "epochs_dnn2": 25,
        "batch_dnn1": 256,
        "batch_dnn2": 128,
        "learning_rate": 1e-4,
        "seed": 0,
    },
    "calibration": {"folds": 9, "grid_step": 0.1},
    "evaluation": {"k_step": 10},
    "detect": {"dump_tracks": False},
}


def _merge(base: dict, override: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigurationError(f"unknown config key {path!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"config key {path!r} must be a section")
            out[key] = _merge(base[key], value, f"{path}.")
        else:
            out[key] = _coerce(path, base[key], value)
    return out


def _coerce(path: str, default, value):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0"):
            return value.lower() in ("true", "1")
        raise ConfigurationError(f"config key {path!r} expects a boolean")
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            as_float = float(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"config key {path!r} expects an integer") from None
        if as_float != int(as_float):
            raise ConfigurationError(f"config key {path!r} expects an integer")
        return int(as_float)
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"config key {path!r} expects a number") from None
    return str(value)


def load_config(path=None, overrides: list[str] | None = None) -> dict:
    """Defaults, optionally overlaid with a JSON file and --set key=value pairs."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                file_cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {path} is not valid JSON: {exc}")
        cfg = _merge(cfg, file_cfg)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects section.key=value, got {item!r}")
        dotted, value = item.split("=", 1)
        parts = dotted.split(".")
        if len(parts) != 2:
            raise ConfigurationError(f"--set expects section.key=value, got {item!r}")
        section, key = parts
        cfg = _merge(cfg, {section: {key: value}})
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    def positive(section, key, strict=True):
        v = cfg[section][key]
        if (v <= 0) if strict else (v < 0):
            bound = ">" if strict else ">="
            raise ConfigurationError(f"{section}.{key} must be {bound} 0, got {v}")

    for key in ("sample_rate", "frame_s", "hop_s", "num_bands", "context"):
        positive("features", key)
    for key in ("num_classes", "train_streams", "test_streams", "stream_s", "events_per_class"):
        positive("synth", key)
    positive("synth", "noise_level", strict=False)
    for key in ("fg", "bg"):
        positive("weighted_loss", key)
    positive("weighted_loss", "reg", strict=False)
    for key in ("class", "dist", "conf"):
        positive("multitask_loss", key, strict=False)
    positive("multitask_loss", "reg", strict=False)
    for key in ("epochs_dnn1", "epochs_dnn2", "batch_dnn1", "batch_dnn2", "learning_rate"):
        positive("training", key)
    positive("calibration", "folds")
    if not 0 < cfg["calibration"]["grid_step"] <= 1:
        raise ConfigurationError("calibration.grid_step must be in (0, 1]")
    positive("evaluation", "k_step")
    if cfg["synth"]["min_gap_s"] < 0.2:
        raise ConfigurationError("synth.min_gap_s must be >= 0.2")


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def resolve_path(cfg: dict, key: str) -> Path:
    """Paths other than out_dir resolve relative to out_dir."""
    out_dir = Path(cfg["paths"]["out_dir"])
    p = Path(cfg["paths"][key])
    return p if p.is_absolute() else out_dir / p
