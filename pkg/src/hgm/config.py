"""Run configuration: documented defaults, TOML files and command-line overrides."""

from __future__ import annotations

import copy

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

# Every key that may appear in a config file, with its default.
DEFAULTS = {
    "seed": 0,
    "out_dir": "hgm-run",
    "data": {
        "source": "synthetic",  # "synthetic" or "dir"
        "path": "",  # directory of equally sized PNGs when source = "dir"
        "count": 8,
        "height": 16,
        "width": 16,
        "channels": 3,
        "rho": 0.8,  # spatial AR(1) correlation of synthetic images
        "var": 0.02,
        "mean": 0.5,
        "channel_corr": 0.95,
        "seed": 1,
    },
    "schedule": {
        "sigma_first": 1.0,
        "sigma_last": 0.01,
        "levels": 10,
        "epsilon": 2e-5,
        "steps": 80,
    },
    "model": {
        # "checkpoint", "gaussian", "correlated-gaussian" (prior of [data]) or "gmm";
        # the train command always builds a fresh "conv" network
        "kind": "checkpoint",
        "transform": "copy",
        "checkpoint": "",
        "checkpoint_lowdim": "",  # image-space model for progressive mode
        "mean": 0.5,
        "var": 0.01,
        "weights": [0.5, 0.5],
        "means": [1.0, -1.0],
        "variances": [0.01, 0.01],
        "features": 32,
        "dilations": [1, 2, 4, 1],
        "norm": "instance",
        "film": True,
        "init_seed": 0,
    },
    "train": {
        "learning_rate": 2e-3,
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "batch_size": 16,
        "iterations": 2000,
        "lr_decay": "cosine",
        "all_levels": False,
    },
    "degradation": {
        "mask": "bayer",  # "bayer", "block", "random" or "file"
        "keep_fraction": 0.3,
        "coverage": 0.5,
        "mask_path": "",
        "noise_std": 0.0,
    },
    "restore": {
        "mode": "basic",
        "lambda": 1.0,
        "lambda_progressive": 1.0,
        "dc_target": "augmented",
        "clamp_each_step": False,
        "snapshots": False,
    },
    "generate": {
        "count": 8,
        "height": 16,
        "width": 16,
        "channels": 3,
    },
    "sweep": {
        "sample_counts": [100, 1000, 10000],
        "seeds": 5,
        "height": 4,
        "width": 4,
        "mean": 0.5,
        "var": 0.25,
        "sigma": 0.5,
        "heldout": 20000,
        "iterations": 3000,
        "batch_size": 1000,
        "learning_rate": 0.05,
        "transforms": ["identity", "copy", "pool", "dwt"],
        "modes": ["basic"],
        "restore_size": 8,
        "restore_rho": 0.9,
        "restore_var": 0.01,
        "keep_fraction": 0.3,
        "restore_trials": 16,
    },
    "eval": {
        "restored_dir": "",
        "reference_dir": "",
    },
}


class ConfigError(ValueError):
    pass


def _merge(base, update, path=""):
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be a table")
            _merge(base[key], value, where + ".")
        else:
            base[key] = value
    return base


def resolve(file_values=None, overrides=None):
    """Defaults, then file values, then dotted-key overrides (``{"restore.mode": "basic"}``)."""
    cfg = copy.deepcopy(DEFAULTS)
    if file_values:
        _merge(cfg, file_values)
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        *parents, leaf = dotted.split(".")
        node = cfg
        for p in parents:
            node = node[p]
        if leaf not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node[leaf] = value
    return cfg


def load_file(path):
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
