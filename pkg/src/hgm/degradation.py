"""Binary degradation operators, observation synthesis and the data-fidelity step.

An observation is ``y = mask * x + e`` where ``mask`` is a 0/1 array of the
image's shape (a binary diagonal matrix in vector form) and ``e`` is optional
Gaussian noise on the kept entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hgm.core import as_image
from hgm.transforms import h_inverse

MASK_KINDS = ("bayer", "block", "random", "file", "custom")


@dataclass(frozen=True)
class DegradationOp:
    mask: np.ndarray
    kind: str = "custom"
    noise_std: float = 0.0

    def __post_init__(self):
        mask = np.asarray(self.mask)
        if mask.ndim < 3:
            raise ValueError(f"mask must have shape (..., height, width, channels), got {mask.shape}")
        if not np.all((mask == 0) | (mask == 1)):
            raise ValueError("mask entries must be exactly 0 or 1")
        if self.kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind {self.kind!r}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        mask = mask.astype(np.float64)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def observed(self):
        return self.mask.astype(bool)

    @property
    def shape(self):
        return self.mask.shape

    def keep_fraction(self):
        return float(self.mask.mean())

    def check_shape(self, shape):
        if tuple(shape[-self.mask.ndim:]) != self.mask.shape and tuple(shape) != self.mask.shape:
            raise ValueError(f"mask shape {self.mask.shape} does not match image shape {tuple(shape)}")


def _check_even(height, width):
    if height <= 0 or width <= 0 or height % 2 or width % 2:
        raise ValueError(f"height and width must be positive and even, got {height}x{width}")


def bayer_mask(height, width):
    """RGGB colour filter array: R at (even, even), G at mixed parity, B at (odd, odd)."""
    _check_even(height, width)
    mask = np.zeros((height, width, 3))
    mask[0::2, 0::2, 0] = 1
    mask[0::2, 1::2, 1] = 1
    mask[1::2, 0::2, 1] = 1
    mask[1::2, 1::2, 2] = 1
    return DegradationOp(mask, "bayer")


def random_mask(height, width, channels, keep_fraction, rng):
    """Keep each pixel (all channels together) independently with probability `keep_fraction`."""
    if not 0 < keep_fraction <= 1:
        raise ValueError("keep_fraction must lie in (0, 1]")
    keep = rng.random((height, width)) < keep_fraction
    mask = np.repeat(keep[:, :, None], channels, axis=2).astype(np.float64)
    return DegradationOp(mask, "random")


def block_mask(height, width, channels, coverage=0.5):
    """Zero a centred rectangle with sides ``floor(sqrt(coverage) * H)`` by ``floor(sqrt(coverage) * W)``."""
    if not 0 < coverage < 1:
        raise ValueError("coverage must lie in (0, 1)")
    bh = int(np.floor(np.sqrt(coverage) * height))
    bw = int(np.floor(np.sqrt(coverage) * width))
    top = (height - bh) // 2
    left = (width - bw) // 2
    mask = np.ones((height, width, channels))
    mask[top:top + bh, left:left + bw, :] = 0
    return DegradationOp(mask, "block")


def load_mask(path, channels, shape=None, per_channel=False):
    """Read an 8-bit PNG mask; a pixel is kept if any of its stored channels is nonzero.

    If `shape` ``(height, width)`` is given the file must match it.  With
    `per_channel` an RGB file is read channel by channel instead (how Bayer
    sidecar masks are stored).
    """
    from PIL import Image

    with Image.open(path) as img:
        if img.mode not in ("L", "RGB", "RGBA", "1", "P"):
            raise ValueError(f"unsupported mask image mode {img.mode!r} in {path}")
        arr = np.asarray(img.convert("RGB"))
    if shape is not None and arr.shape[:2] != tuple(shape[:2]):
        raise ValueError(f"mask {path} is {arr.shape[0]}x{arr.shape[1]}, expected {shape[0]}x{shape[1]}")
    if per_channel and channels == 3:
        mask = (arr != 0).astype(np.float64)
    else:
        keep = np.any(arr != 0, axis=-1)
        mask = np.repeat(keep[:, :, None], channels, axis=2).astype(np.float64)
    return DegradationOp(mask, "file")


def apply(op, x, rng=None):
    """Synthesize the observation ``mask * x + noise`` (noise only on kept entries)."""
    x = as_image(x)
    op.check_shape(x.shape)
    y = op.mask * x
    if op.noise_std > 0:
        if rng is None:
            raise ValueError("an rng is required when noise_std > 0")
        y = y + op.mask * (op.noise_std * rng.standard_normal(x.shape))
    return y


def data_fidelity_update(X, y, op, lam, t):
    """Closed-form minimiser of ``lam * ||y - M x||^2 + ||x - H^{-1}(X)||^2`` for binary diagonal M.

    Observed entries become ``(lam * y + h) / (lam + 1)`` with ``h = H^{-1}(X)``;
    unobserved entries are returned as ``h`` untouched.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    h = h_inverse(X, t)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != h.shape:
        raise ValueError(f"observation shape {y.shape} does not match image shape {h.shape}")
    op.check_shape(h.shape)
    if lam == 0:
        return h
    blended = (lam * y + h) / (lam + 1.0)
    return np.where(op.observed, blended, h)
