"""Synthetic correlated-Gaussian images and the closed-form references used to judge restorations."""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def ar1_matrix(n, rho):
    idx = np.arange(n)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def channel_matrix(channels, channel_corr):
    k = np.full((channels, channels), float(channel_corr))
    np.fill_diagonal(k, 1.0)
    return k


def ar1_covariance(height, width, channels=1, rho=0.9, var=0.01, channel_corr=0.0):
    """Dense covariance of a separable AR(1) field, flattened in (row, column, channel) order.

    ``cov[(r, c, k), (r', c', k')] = var * rho^|r - r'| * rho^|c - c'| * K[k, k']`` with
    ``K`` having unit diagonal and `channel_corr` off the diagonal.
    """
    return var * np.kron(np.kron(ar1_matrix(height, rho), ar1_matrix(width, rho)),
                         channel_matrix(channels, channel_corr))


def sample_images(n, height, width, channels=1, rho=0.9, var=0.01, mean=0.5, channel_corr=0.0, rng=None):
    """Draw `n` images from the separable AR(1) Gaussian described by :func:`ar1_covariance`."""
    rng = np.random.default_rng() if rng is None else rng
    lr = np.linalg.cholesky(ar1_matrix(height, rho))
    lc = np.linalg.cholesky(ar1_matrix(width, rho))
    lk = np.linalg.cholesky(channel_matrix(channels, channel_corr))
    z = rng.standard_normal((n, height, width, channels))
    x = np.einsum("ij,njwk->niwk", lr, z)
    x = np.einsum("ij,nhjk->nhik", lc, x)
    x = np.einsum("ij,nhwj->nhwi", lk, x)
    return mean + np.sqrt(var) * x


def conditional_mean(mean, cov, y, observed):
    """Posterior mean of a Gaussian image given its observed entries.

    Observed entries are returned as `y`; missing ones as
    ``mu_m + cov_mo cov_oo^{-1} (y_o - mu_o)``.
    """
    shape = np.shape(y)
    mu = np.broadcast_to(np.asarray(mean, dtype=np.float64), shape).ravel()
    yv = np.asarray(y, dtype=np.float64).ravel()
    obs = np.broadcast_to(observed, shape).ravel().astype(bool)
    miss = ~obs
    out = yv.copy()
    if miss.any():
        c_oo = cov[np.ix_(obs, obs)]
        c_mo = cov[np.ix_(miss, obs)]
        out[miss] = mu[miss] + c_mo @ np.linalg.solve(c_oo, yv[obs] - mu[obs])
    out[obs] = yv[obs]
    return out.reshape(shape)


_BILINEAR = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]])


def bilinear_fill(y, mask):
    """Per-channel bilinear interpolation of missing entries (normalised convolution).

    On a Bayer mosaic this is classical bilinear demosaicking; the
    normalisation keeps borders unbiased.
    """
    y = np.asarray(y, dtype=np.float64)
    mask = np.broadcast_to(np.asarray(mask, dtype=np.float64), y.shape)
    out = np.empty_like(y)
    for idx in np.ndindex(*y.shape[:-3], y.shape[-1]):
        lead, k = idx[:-1], idx[-1]
        m = mask[lead + (slice(None), slice(None), k)]
        num = ndimage.convolve(m * y[lead + (slice(None), slice(None), k)], _BILINEAR, mode="constant")
        den = ndimage.convolve(m, _BILINEAR, mode="constant")
        filled = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        out[lead + (slice(None), slice(None), k)] = np.where(m > 0, y[lead + (slice(None), slice(None), k)], filled)
    return out
