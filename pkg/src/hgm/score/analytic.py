"""Closed-form scores of Gaussian and Gaussian-mixture priors.

These serve as exact oracles: the score of a prior smoothed by
``N(0, sigma^2 I)`` is available analytically, so samplers and restorers can
be checked against known answers.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from hgm.score.nn import _sigma_array
from hgm.transforms import Transform, h_forward, transform_matrix


class AnalyticGaussian:
    """Isotropic Gaussian ``N(mean, var * I)``; score ``-(X - mean) / (var + sigma^2)``."""

    kind = "gaussian"

    def __init__(self, mean, var):
        if not var > 0:
            raise ValueError("var must be positive")
        self.mean = np.asarray(mean, dtype=np.float64)
        self.var = float(var)

    def score(self, X, sigma):
        X = np.asarray(X, dtype=np.float64)
        return -(X - self.mean) / (self.var + _sigma_array(sigma, X) ** 2)

    def descriptor(self):
        return {"kind": self.kind, "mean": self.mean.tolist(), "var": self.var}


class CorrelatedGaussian:
    """Gaussian ``N(mean, cov)`` over tensors of a fixed shape.

    The covariance is eigendecomposed once, so the smoothed precision
    ``(cov + sigma^2 I)^{-1}`` is cheap for every noise level.
    """

    kind = "correlated-gaussian"

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.shape = self.mean.shape
        d = self.mean.size
        cov = np.asarray(cov, dtype=np.float64)
        if cov.shape != (d, d):
            raise ValueError(f"covariance must be {d}x{d}, got {cov.shape}")
        self.cov = cov
        evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
        if evals.min() < -1e-10 * max(1.0, evals.max()):
            raise ValueError("covariance is not positive semi-definite")
        self.evals = np.clip(evals, 0.0, None)
        self.evecs = evecs

    def score(self, X, sigma):
        X = np.asarray(X, dtype=np.float64)
        s = _sigma_array(sigma, X)
        if X.shape[-len(self.shape):] != self.shape:
            raise ValueError(f"model expects trailing shape {self.shape}, got {X.shape}")
        lead = X.shape[: X.ndim - len(self.shape)]
        diff = (X - self.mean).reshape(lead + (-1,))
        coeffs = diff @ self.evecs
        s2 = np.reshape(s, np.shape(s)[:1] + (1,)) ** 2 if np.ndim(s) else s ** 2
        out = -(coeffs / (self.evals + s2)) @ self.evecs.T
        return out.reshape(X.shape)

    def descriptor(self):
        return {"kind": self.kind, "shape": list(self.shape)}


class AnalyticGmm:
    """Mixture of isotropic Gaussians ``sum_k w_k N(mean_k, var_k I)`` over the whole tensor.

    Responsibilities are computed from the sigma-smoothed components with a
    log-sum-exp, per sample (leading axes beyond the trailing three are a batch).
    """

    kind = "gmm"

    def __init__(self, weights, means, variances):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or len(w) == 0 or np.any(w <= 0):
            raise ValueError("weights must be a non-empty vector of positive numbers")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if len(means) != len(w) or len(variances) != len(w):
            raise ValueError("weights, means and variances must have equal length")
        self.weights = w
        self.means = [np.asarray(m, dtype=np.float64) for m in means]
        self.variances = np.asarray(variances, dtype=np.float64)
        if np.any(self.variances <= 0):
            raise ValueError("variances must be positive")

    def _log_terms(self, X, sigma):
        s = _sigma_array(sigma, X)
        d = int(np.prod(X.shape[-3:]))
        axes = (-3, -2, -1)
        s2 = np.squeeze(s, axis=(-3, -2, -1)) ** 2 if np.ndim(s) else s ** 2
        logs = []
        for w, m, v in zip(self.weights, self.means, self.variances):
            var = v + s2
            sq = np.sum((X - m) ** 2, axis=axes)
            logs.append(np.log(w) - 0.5 * d * np.log(2 * np.pi * var) - 0.5 * sq / var)
        return np.stack(logs, axis=-1), s

    def responsibilities(self, X, sigma):
        X = np.asarray(X, dtype=np.float64)
        logs, _ = self._log_terms(X, sigma)
        return np.exp(logs - logsumexp(logs, axis=-1, keepdims=True))

    def score(self, X, sigma):
        X = np.asarray(X, dtype=np.float64)
        logs, s = self._log_terms(X, sigma)
        gamma = np.exp(logs - logsumexp(logs, axis=-1, keepdims=True))
        out = np.zeros_like(X)
        for k, (m, v) in enumerate(zip(self.means, self.variances)):
            g = gamma[..., k][..., None, None, None]
            out += g * (-(X - m) / (v + s ** 2))
        return out

    def descriptor(self):
        return {
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "means": [m.tolist() for m in self.means],
            "variances": self.variances.tolist(),
        }


def lift_gaussian(model, shape, t):
    """Gaussian prior of ``H(x)`` when ``x`` follows `model` on images of `shape`.

    The lifted covariance ``T cov T^T`` is singular for ``COPY``; the smoothed
    score stays well defined because ``sigma > 0``.
    """
    t = Transform.parse(t)
    if t is Transform.IDENTITY:
        return model
    shape = tuple(shape)
    d = int(np.prod(shape))
    if isinstance(model, AnalyticGaussian):
        mean = np.broadcast_to(model.mean, shape)
        cov = model.var * np.eye(d)
    elif isinstance(model, CorrelatedGaussian):
        if model.shape != shape:
            raise ValueError(f"model shape {model.shape} does not match {shape}")
        mean, cov = model.mean, model.cov
    else:
        raise TypeError(f"cannot lift a {type(model).__name__}")
    T = transform_matrix(shape, t)
    lifted_mean = h_forward(mean, t)
    return CorrelatedGaussian(lifted_mean, T @ cov @ T.T)
