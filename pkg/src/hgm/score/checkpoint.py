"""JSON checkpoints for trainable score models.

A checkpoint records the architecture descriptor, the flat parameter vector
(as exact-round-tripping JSON floats), the noise schedule, the lifting
transform the model was trained under and the training seed.
"""

from __future__ import annotations

import json

import numpy as np

from hgm.core import NoiseSchedule
from hgm.score.nn import build_network

FORMAT = "hgm-checkpoint"
VERSION = 1


def checkpoint_dict(model, schedule=None, transform="identity", seed=None, image_shape=None, extra=None):
    return {
        "format": FORMAT,
        "version": VERSION,
        "architecture": model.descriptor(),
        "transform": str(getattr(transform, "value", transform)),
        "image_shape": list(image_shape) if image_shape is not None else None,
        "schedule": schedule.to_dict() if schedule is not None else None,
        "seed": seed,
        "extra": extra or {},
        "theta": [float(v) for v in model.theta],
    }


def save_checkpoint(path, model, **kwargs):
    with open(path, "w") as fh:
        json.dump(checkpoint_dict(model, **kwargs), fh, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path):
    """Return ``(model, meta)`` where `meta` is the checkpoint dict minus ``theta``."""
    with open(path) as fh:
        d = json.load(fh)
    if d.get("format") != FORMAT:
        raise ValueError(f"{path} is not an hgm checkpoint")
    if d.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')}")
    model = build_network(d["architecture"], np.asarray(d.pop("theta"), dtype=np.float64))
    if d.get("schedule"):
        d["schedule"] = NoiseSchedule.from_dict(d["schedule"])
    return model, d
