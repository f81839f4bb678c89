"""Score models: analytic oracles, trainable networks, DSM training."""

import numpy as np

from hgm.score.analytic import AnalyticGaussian, AnalyticGmm, CorrelatedGaussian, lift_gaussian
from hgm.score.checkpoint import load_checkpoint, save_checkpoint
from hgm.score.dsm import TrainConfig, TrainingError, dsm_loss, train
from hgm.score.gradcheck import GradCheckReport, grad_check
from hgm.score.nn import ConvScoreNet, LinearScoreHead, build_network


def evaluate(model, X, sigma):
    """Score ``s(X, sigma)`` of any model, checked for shape and finiteness."""
    if np.any(np.asarray(sigma) <= 0):
        raise ValueError("sigma must be positive")
    X = np.asarray(X, dtype=np.float64)
    out = model.score(X, sigma)
    if out.shape != X.shape:
        raise ValueError(f"score shape {out.shape} differs from input shape {X.shape}")
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("score evaluation produced non-finite values")
    return out


__all__ = [
    "AnalyticGaussian",
    "AnalyticGmm",
    "ConvScoreNet",
    "CorrelatedGaussian",
    "GradCheckReport",
    "LinearScoreHead",
    "TrainConfig",
    "TrainingError",
    "build_network",
    "dsm_loss",
    "evaluate",
    "grad_check",
    "lift_gaussian",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
