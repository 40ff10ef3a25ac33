"""Flat, typed run configuration shared by every command.

A config file is INI with a single ``[run]`` section. Values are merged as
defaults < preset < file < command-line flags, and each key is parsed and
checked against the schema below. Unknown keys are rejected.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

from .errors import ConfigError
from .mcer import MCERConfig
from .network.model import NetworkConfig, toy_config

SECTION = "run"


def _int(v):
    return int(v)


def _float(v):
    return float(v)


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_int(v):
    if v is None or str(v).strip().lower() in ("", "none"):
        return None
    return int(v)


def _scales(v):
    if isinstance(v, (tuple, list)):
        return tuple(float(x) for x in v)
    return tuple(float(x) for x in str(v).split(",") if x.strip())


def _str(v):
    # "none" marks an unset path, so echoed configs read back unchanged
    return None if v is None or str(v).strip().lower() in ("", "none") else str(v)


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class Key:
    parse: object
    default: object
    help: str


# architecture keys default to None and are filled from the preset
SCHEMA = {
    "preset": Key(_str, "full", "architecture preset: full or toy"),
    "scale": Key(_opt_int, None, "upscaling factor (2 or 4)"),
    "in_channels": Key(_opt_int, None, "image channels (1 or 3)"),
    "embed_dim": Key(_opt_int, None, "feature width"),
    "window_size": Key(_opt_int, None, "attention window size"),
    "num_rdstb": Key(_opt_int, None, "residual dense Swin blocks per group"),
    "stl_per_rdstb": Key(_opt_int, None, "Swin layers per block"),
    "num_heads": Key(_opt_int, None, "Swin attention heads"),
    "mcer_scales": Key(_scales, (1.0, 0.5, 0.25), "comma-separated MCER window fractions"),
    "use_mcer": Key(_bool, True, "multi-scale event representation (false: single full window)"),
    "use_scma": Key(_bool, True, "cross-modal attention fusion (false: convolution)"),
    "use_irg": Key(_bool, True, "residual group of Swin blocks (false: convolutions)"),
    "threshold_c": Key(_float, 0.2, "event contrast threshold"),
    "log_eps": Key(_float, 1e-3, "offset inside the log intensity"),
    "frames_per_sample": Key(_int, 13, "sharp frames averaged into one blurry sample"),
    "frame_interval": Key(_float, 1 / 240, "seconds between input frames"),
    "alpha": Key(_float, 1.0, "L1 loss weight"),
    "beta": Key(_float, 0.0, "perceptual loss weight"),
    "lr": Key(_float, 1e-4, "base learning rate"),
    "lr_decay": Key(_float, 0.98, "learning-rate decay factor"),
    "lr_decay_every": Key(_int, 5, "epochs between decays"),
    "epochs": Key(_int, 1, "training epochs"),
    "steps_per_epoch": Key(_opt_int, None, "optimizer steps per epoch (none: one pass)"),
    "batch": Key(_int, 4, "batch size"),
    "crop": Key(_opt_int, 64, "HR training crop (none: whole images)"),
    "flip": Key(_bool, True, "random horizontal flips"),
    "seed": Key(_int, 0, "random seed"),
    "jobs": Key(_int, 1, "worker processes"),
    "input": Key(_str, None, "simulate: directory of frame-sequence subdirectories"),
    "manifest": Key(_str, None, "training or evaluation manifest"),
    "val_manifest": Key(_str, None, "validation manifest"),
    "checkpoint": Key(_str, None, "model checkpoint"),
    "resume": Key(_str, None, "checkpoint to resume training from"),
    "predictions": Key(_str, None, "eval: directory of <id>.png predictions instead of a checkpoint"),
    "blurry": Key(_str, None, "infer: blurry LR PNG"),
    "events": Key(_str, None, "infer: EVT1 event file"),
    "sidecar": Key(_str, None, "infer: JSON sidecar (default: next to the event file)"),
    "output": Key(_str, None, "output directory (must be new or empty)"),
}


def parse_value(key, value):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return SCHEMA[key].parse(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from exc


def read_ini(path) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    extra = set(parser.sections()) - {SECTION}
    if extra:
        raise ConfigError(f"{path}: unknown sections {sorted(extra)}; use [{SECTION}]")
    if not parser.has_section(SECTION):
        return {}
    return {k: parse_value(k, v) for k, v in parser.items(SECTION)}


def resolve(file_values=None, overrides=None) -> dict:
    """Merge defaults, file values and overrides (later wins) and validate."""
    cfg = {k: key.default for k, key in SCHEMA.items()}
    for layer in (file_values or {}, overrides or {}):
        for k, v in layer.items():
            cfg[k] = parse_value(k, v)
    if cfg["preset"] not in ("full", "toy"):
        raise ConfigError(f"preset must be full or toy, got {cfg['preset']!r}")
    for k in ("epochs", "lr_decay_every"):
        if cfg[k] < 0:
            raise ConfigError(f"{k} must be >= 0")
    for k in ("batch", "jobs", "frames_per_sample"):
        if cfg[k] < 1:
            raise ConfigError(f"{k} must be >= 1")
    if cfg["frame_interval"] <= 0 or cfg["threshold_c"] <= 0 or cfg["log_eps"] <= 0:
        raise ConfigError("frame_interval, threshold_c and log_eps must be positive")
    # constructing these runs their own validation
    network_config(cfg)
    mcer_config(cfg)
    return cfg


def mcer_config(cfg) -> MCERConfig:
    return MCERConfig(cfg["mcer_scales"] if cfg["use_mcer"] else (1.0,))


def network_config(cfg) -> NetworkConfig:
    base = (NetworkConfig() if cfg["preset"] == "full" else toy_config()).to_dict()
    for k in ("scale", "in_channels", "embed_dim", "window_size", "num_rdstb", "stl_per_rdstb", "num_heads"):
        if cfg[k] is not None:
            base[k] = cfg[k]
    base["mcer_channels"] = mcer_config(cfg).num_channels
    base["use_scma"] = cfg["use_scma"]
    base["use_irg"] = cfg["use_irg"]
    return NetworkConfig.from_dict(base)


def dump_ini(cfg, path):
    """Write the effective configuration, one sorted key per line."""
    lines = [f"[{SECTION}]"] + [f"{k} = {_fmt(cfg[k])}" for k in sorted(cfg)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
