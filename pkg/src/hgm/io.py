"""PNG image and mask I/O.

Images map to ``[0, 1]`` by dividing 8-bit values by 255 on load and are
written as ``round(255 * clip(x, 0, 1))``.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(x):
    return np.round(255.0 * np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)).astype(np.uint8)


def save_png(path, x):
    """Write an ``(H, W, C)`` image with 1 or 3 channels (other counts are rejected)."""
    arr = to_uint8(x)
    if arr.ndim == 3 and arr.shape[-1] == 1:
        arr = arr[..., 0]
    if arr.ndim == 3 and arr.shape[-1] != 3:
        raise ValueError(f"cannot store {arr.shape[-1]} channels as PNG")
    Image.fromarray(arr).save(path, format="PNG", optimize=False)


def load_png(path, channels=3):
    """Read a PNG as a float image with `channels` channels (1 = luminance, 3 = RGB)."""
    with Image.open(path) as img:
        img = img.convert("L" if channels == 1 else "RGB")
        arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[..., None]
    return arr


def save_mask_png(path, mask):
    """Store a 0/1 mask as an 8-bit PNG (RGB when it has 3 channels)."""
    save_png(path, np.asarray(mask, dtype=np.float64))


def load_image_dir(directory, channels=3):
    """Load every ``*.png`` in `directory` (sorted by name); all must share one size."""
    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise FileNotFoundError(f"no PNG images found in {directory}")
    images = [load_png(p, channels) for p in paths]
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise ValueError(f"images in {directory} have differing sizes: {sorted(shapes)}")
    return [p.stem for p in paths], np.stack(images)


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
