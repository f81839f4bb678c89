"""PSNR and SSIM quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PSNR_CAP_DB = 99.0


@dataclass(frozen=True)
class MetricReport:
    psnr_db: float
    ssim: float


def psnr(u, reference, cap=PSNR_CAP_DB):
    """Peak signal-to-noise ratio in dB, using the reference maximum as peak.

    Returns `cap` for (numerically) identical inputs and never exceeds it.
    """
    u = np.asarray(u, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if u.shape != reference.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {reference.shape}")
    peak = float(reference.max())
    if peak <= 0:
        raise ValueError("reference maximum must be positive")
    mse = float(np.mean((u - reference) ** 2))
    if mse < 1e-19 * peak ** 2:
        return cap
    return min(cap, 20.0 * math.log10(peak / math.sqrt(mse)))


def gaussian_window(size=11, sigma=1.5):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(a, g):
    # separable weighted sum over every fully-contained window of the two leading axes
    k = len(g)
    rows = sliding_window_view(a, k, axis=0) @ g
    return sliding_window_view(rows, k, axis=1) @ g


def ssim(u, reference, data_range=1.0, window=11, sigma=1.5):
    """Mean structural similarity over all valid Gaussian-weighted windows.

    Computed per channel with ``c1 = (0.01 * data_range)**2`` and
    ``c2 = (0.03 * data_range)**2``, then averaged over channels.
    """
    u = np.asarray(u, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if u.shape != reference.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {reference.shape}")
    if u.ndim == 2:
        u, reference = u[..., None], reference[..., None]
    if u.ndim != 3:
        raise ValueError("ssim expects a single (height, width, channels) image")
    if u.shape[0] < window or u.shape[1] < window:
        raise ValueError(f"image {u.shape[0]}x{u.shape[1]} is smaller than the {window}x{window} window")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    g = gaussian_window(window, sigma)
    mu_u = _filter_valid(u, g)
    mu_r = _filter_valid(reference, g)
    var_u = _filter_valid(u * u, g) - mu_u ** 2
    var_r = _filter_valid(reference * reference, g) - mu_r ** 2
    cov = _filter_valid(u * reference, g) - mu_u * mu_r
    num = (2 * mu_u * mu_r + c1) * (2 * cov + c2)
    den = (mu_u ** 2 + mu_r ** 2 + c1) * (var_u + var_r + c2)
    per_channel = np.mean(num / den, axis=(0, 1))
    return float(np.mean(per_channel))


def report(u, reference, data_range=1.0):
    """PSNR and SSIM of `u` against `reference` after clamping both to ``[0, data_range]``.

    SSIM is ``nan`` for images smaller than the window.
    """
    u = np.clip(u, 0.0, data_range)
    reference = np.clip(reference, 0.0, data_range)
    try:
        s = ssim(u, reference, data_range)
    except ValueError:
        s = float("nan")
    return MetricReport(psnr(u, reference), s)
