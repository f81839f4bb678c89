"""Invertible lifting maps from an image to a higher-channel tensor.

``COPY`` stacks the image twice on the channel axis, ``POOL`` splits it into
its four checkerboard (polyphase) sub-images and ``DWT`` takes one level of
the orthonormal 2-D Haar transform.  All maps act on the trailing
``(height, width, channels)`` axes, so batches pass through unchanged.
"""

from __future__ import annotations

import enum

import numpy as np

from hgm.core import as_image


class Transform(enum.Enum):
    IDENTITY = "identity"
    COPY = "copy"
    POOL = "pool"
    DWT = "dwt"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(t.value for t in cls)
            raise ValueError(f"unknown transform {value!r}; expected one of {names}") from None


def lifted_shape(shape, t):
    """Shape of ``h_forward`` applied to an image of `shape`."""
    t = Transform.parse(t)
    *lead, h, w, c = shape
    if t is Transform.IDENTITY:
        return tuple(shape)
    if t is Transform.COPY:
        return (*lead, h, w, 2 * c)
    if h % 2 or w % 2:
        raise ValueError(f"{t.value} transform needs even height and width, got {h}x{w}")
    return (*lead, h // 2, w // 2, 4 * c)


def _phases(x):
    return (
        x[..., 0::2, 0::2, :],
        x[..., 0::2, 1::2, :],
        x[..., 1::2, 0::2, :],
        x[..., 1::2, 1::2, :],
    )


def _interleave(a, b, c, d):
    *lead, h, w, ch = a.shape
    out = np.empty((*lead, 2 * h, 2 * w, ch), dtype=np.result_type(a, b, c, d))
    out[..., 0::2, 0::2, :] = a
    out[..., 0::2, 1::2, :] = b
    out[..., 1::2, 0::2, :] = c
    out[..., 1::2, 1::2, :] = d
    return out


def h_forward(x, t):
    """Lift `x` with transform `t`.

    ``POOL`` output channel block ``k`` holds the sub-image at row parity
    ``k // 2`` and column parity ``k % 2``.  ``DWT`` output blocks are
    ``LL, LH, HL, HH`` with taps ``1/2`` (orthonormal in 2-D).
    """
    t = Transform.parse(t)
    x = as_image(x)
    lifted_shape(x.shape, t)
    if t is Transform.IDENTITY:
        return x.copy()
    if t is Transform.COPY:
        return np.concatenate([x, x], axis=-1)
    a, b, c, d = _phases(x)
    if t is Transform.POOL:
        return np.concatenate([a, b, c, d], axis=-1)
    ll = 0.5 * (a + b + c + d)
    lh = 0.5 * (a + b - c - d)
    hl = 0.5 * (a - b + c - d)
    hh = 0.5 * (a - b - c + d)
    return np.concatenate([ll, lh, hl, hh], axis=-1)


def h_inverse(X, t):
    """Map a lifted tensor back to image space.

    The ``COPY`` inverse averages the two halves, which is the least-squares
    pseudo-inverse when the halves disagree.
    """
    t = Transform.parse(t)
    X = as_image(X, "X")
    c = X.shape[-1]
    if t is Transform.IDENTITY:
        return X.copy()
    if t is Transform.COPY:
        if c % 2:
            raise ValueError(f"copy inverse needs an even channel count, got {c}")
        half = c // 2
        return 0.5 * (X[..., :half] + X[..., half:])
    if c % 4:
        raise ValueError(f"{t.value} inverse needs a channel count divisible by 4, got {c}")
    q = c // 4
    blocks = [X[..., k * q:(k + 1) * q] for k in range(4)]
    if t is Transform.POOL:
        return _interleave(*blocks)
    ll, lh, hl, hh = blocks
    a = 0.5 * (ll + lh + hl + hh)
    b = 0.5 * (ll + lh - hl - hh)
    cc = 0.5 * (ll - lh + hl - hh)
    d = 0.5 * (ll - lh - hl + hh)
    return _interleave(a, b, cc, d)


def transform_matrix(shape, t):
    """Dense matrix of the (linear) lifting map for a single image of `shape`.

    Rows index the flattened lifted tensor, columns the flattened image.
    """
    h, w, c = shape
    n = h * w * c
    basis = np.eye(n).reshape(n, h, w, c)
    lifted = h_forward(basis, t)
    return lifted.reshape(n, -1).T
