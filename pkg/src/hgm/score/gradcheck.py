"""Finite-difference verification of trainable-model gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GradCheckReport:
    passed: bool
    max_rel_error: float
    n_checked: int
    worst_index: int


def fixed_noise_loss(model, X, sigma, z, with_grad=True):
    """DSM loss of `model` at a frozen perturbation: ``0.5 * mean ||sigma s(X + sigma z) + z||^2``."""
    X = np.asarray(X, dtype=np.float64)
    batch = X if X.ndim == 4 else X[None]
    zb = z.reshape(batch.shape)
    out, vjp = model.scaled_score_and_vjp(batch + sigma * zb, sigma)
    resid = out + zb
    n = len(batch)
    loss = 0.5 * float(np.sum(resid ** 2)) / n
    return loss, (vjp(resid / n) if with_grad else None)


def grad_check(model, X, sigma, tolerance, n_params=100, step=1e-5, seed=0, corrupt=None):
    """Compare backprop gradients with central differences on randomly chosen parameters.

    `corrupt`, if given, is applied to the analytic gradient before the
    comparison (a hook for negative controls).  The relative error of one
    parameter is ``|g - fd| / max(|g|, |fd|, 1e-8)``.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    rng = np.random.default_rng(seed)
    X = np.asarray(X, dtype=np.float64)
    z = rng.standard_normal(X.shape)
    model = model.copy()
    _, grad = fixed_noise_loss(model, X, sigma, z)
    if corrupt is not None:
        grad = corrupt(grad)
    k = min(n_params, model.n_params)
    idx = rng.choice(model.n_params, size=k, replace=False)
    theta = model.theta
    errors = np.empty(k)
    for j, i in enumerate(idx):
        orig = theta[i]
        theta[i] = orig + step
        lp, _ = fixed_noise_loss(model, X, sigma, z, with_grad=False)
        theta[i] = orig - step
        lm, _ = fixed_noise_loss(model, X, sigma, z, with_grad=False)
        theta[i] = orig
        fd = (lp - lm) / (2 * step)
        errors[j] = abs(grad[i] - fd) / max(abs(grad[i]), abs(fd), 1e-8)
    worst = int(np.argmax(errors))
    max_err = float(errors[worst])
    return GradCheckReport(max_err < tolerance, max_err, k, int(idx[worst]))
