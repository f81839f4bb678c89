"""Small trainable score networks with hand-written reverse-mode gradients.

Every network keeps its parameters in one flat ``float64`` vector ``theta``;
layers hold reshaped views into it so an optimizer can update ``theta`` in
place.  Backward passes accumulate into a flat gradient of the same layout.
"""

from __future__ import annotations

import numpy as np


def _sigma_array(sigma, X):
    s = np.asarray(sigma, dtype=np.float64)
    if np.any(s <= 0):
        raise ValueError("sigma must be positive")
    if s.ndim == 0:
        return s
    if s.ndim != 1 or X.ndim != 4 or s.shape[0] != X.shape[0]:
        raise ValueError(f"per-sample sigma of shape {s.shape} does not match batch shape {X.shape}")
    return s.reshape(-1, 1, 1, 1)


class ParamLayout:
    """Named slices of a flat parameter vector."""

    def __init__(self, shapes):
        self.shapes = dict(shapes)
        self.slices = {}
        offset = 0
        for name, shape in self.shapes.items():
            size = int(np.prod(shape))
            self.slices[name] = slice(offset, offset + size)
            offset += size
        self.size = offset

    def views(self, flat):
        return {name: flat[sl].reshape(self.shapes[name]) for name, sl in self.slices.items()}


class Conv2d:
    """'Same'-padded dilated 3x3 (or 1x1) convolution on NHWC arrays."""

    def __init__(self, kernel, dilation=1):
        self.kernel = kernel
        self.dilation = dilation

    def forward(self, x, w, b):
        n, h, wd, c = x.shape
        k, d = self.kernel, self.dilation
        if k == 1:
            cols = x.reshape(-1, c)
        else:
            p = d * (k // 2)
            xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
            taps = [xp[:, i * d:i * d + h, j * d:j * d + wd, :] for i in range(k) for j in range(k)]
            cols = np.stack(taps, axis=3).reshape(-1, k * k * c)
        out = cols @ w.reshape(-1, w.shape[-1])
        if b is not None:
            out += b
        return out.reshape(n, h, wd, -1), (x.shape, cols)

    def backward(self, cache, dout, w, gw, gb, input_grad=True):
        shape, cols = cache
        n, h, wd, c = shape
        k, d = self.kernel, self.dilation
        g2 = dout.reshape(-1, dout.shape[-1])
        gw += (cols.T @ g2).reshape(gw.shape)
        if gb is not None:
            gb += g2.sum(axis=0)
        if not input_grad:
            return None
        dcols = g2 @ w.reshape(-1, w.shape[-1]).T
        if k == 1:
            return dcols.reshape(shape)
        p = d * (k // 2)
        dcols = dcols.reshape(n, h, wd, k * k, c)
        dxp = np.zeros((n, h + 2 * p, wd + 2 * p, c))
        for t in range(k * k):
            i, j = divmod(t, k)
            dxp[:, i * d:i * d + h, j * d:j * d + wd, :] += dcols[:, :, :, t, :]
        return dxp[:, p:p + h, p:p + wd, :]


def silu(x):
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    return x * sig, sig


def silu_backward(dout, x, sig):
    return dout * (sig + x * sig * (1.0 - sig))


def instance_norm(h, eps=1e-6):
    mean = h.mean(axis=(1, 2), keepdims=True)
    inv = 1.0 / np.sqrt(h.var(axis=(1, 2), keepdims=True) + eps)
    return (h - mean) * inv, inv


def instance_norm_backward(dy, y, inv):
    return inv * (dy - dy.mean(axis=(1, 2), keepdims=True) - y * (dy * y).mean(axis=(1, 2), keepdims=True))


def noise_features(sigma, n):
    """Basis ``(t, t^2)`` of ``t = log10(sigma) + 1`` per sample, shape ``(n, 2)``."""
    t = np.log10(np.broadcast_to(np.asarray(sigma, dtype=np.float64).reshape(-1), (n,))) + 1.0
    return np.stack([t, t * t], axis=1)


class ConvScoreNet:
    """Noise-conditional convolutional score model ``s(X, sigma) = f(X, sigma) / sigma``.

    ``f`` is a stack of 3x3 dilated convolutions with SiLU activations plus a
    1x1 linear skip from the input straight to the output.  The default
    (32 feature maps, dilations 1-2-4-1) sees a 17x17 neighbourhood.

    Two optional hidden-layer stages, applied between each hidden
    convolution and its activation:

    ``norm="instance"``
        per-image, per-channel standardisation over the spatial axes.
    ``film=True``
        feature-wise gain and offset ``h * (1 + gamma(sigma)) + beta(sigma)``,
        with ``gamma`` and ``beta`` linear in ``(t, t^2)``, ``t = log10(sigma) + 1``.
        Without it ``f`` ignores sigma.
    """

    kind = "conv"

    def __init__(self, channels, features=32, dilations=(1, 2, 4, 1), seed=0, theta=None,
                 norm="none", film=False):
        if norm not in ("none", "instance"):
            raise ValueError(f"unknown norm {norm!r}")
        self.channels = int(channels)
        self.features = int(features)
        self.dilations = tuple(int(d) for d in dilations)
        self.seed = seed
        self.norm = norm
        self.film = bool(film)
        widths = [self.channels] + [self.features] * (len(self.dilations) - 1) + [self.channels]
        shapes = {}
        self.convs = []
        for i, d in enumerate(self.dilations):
            shapes[f"w{i}"] = (3, 3, widths[i], widths[i + 1])
            hidden = i < len(self.dilations) - 1
            if not (hidden and norm == "instance"):
                # a bias in front of instance normalisation cancels out
                shapes[f"b{i}"] = (widths[i + 1],)
            if self.film and i < len(self.dilations) - 1:
                shapes[f"gamma{i}"] = (2, widths[i + 1])
                shapes[f"beta{i}"] = (2, widths[i + 1])
            self.convs.append(Conv2d(3, d))
        shapes["w_skip"] = (1, 1, self.channels, self.channels)
        shapes["b_skip"] = (self.channels,)
        self.skip = Conv2d(1)
        self.layout = ParamLayout(shapes)
        if theta is None:
            theta = self._init_theta(seed)
        self.set_theta(theta)

    def _init_theta(self, seed):
        rng = np.random.default_rng(seed)
        theta = np.zeros(self.layout.size)
        views = self.layout.views(theta)
        for name, shape in self.layout.shapes.items():
            if name.startswith("w"):
                fan_in = int(np.prod(shape[:-1]))
                bound = 1.0 / np.sqrt(fan_in)
                views[name][...] = rng.uniform(-bound, bound, size=shape)
        return theta

    @property
    def theta(self):
        return self._theta

    def set_theta(self, theta):
        theta = np.array(theta, dtype=np.float64)
        if theta.shape != (self.layout.size,):
            raise ValueError(f"expected {self.layout.size} parameters, got {theta.shape}")
        self._theta = theta
        self._p = self.layout.views(self._theta)

    @property
    def n_params(self):
        return self.layout.size

    def descriptor(self):
        return {
            "kind": self.kind,
            "channels": self.channels,
            "features": self.features,
            "dilations": list(self.dilations),
            "activation": "silu",
            "norm": self.norm,
            "film": self.film,
            "init_seed": self.seed,
        }

    def copy(self):
        return ConvScoreNet(self.channels, self.features, self.dilations, self.seed,
                            self._theta.copy(), self.norm, self.film)

    def _as_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.channels:
            raise ValueError(f"network expects {self.channels} channels, got {X.shape[-1]}")
        return X.reshape((-1,) + X.shape[-3:]), X.shape

    def f(self, X, sigma=1.0):
        """Network output ``f(X, sigma)``; the score is ``f / sigma``."""
        out, _ = self._forward(X, sigma, keep=False)
        return out

    def _forward(self, X, sigma, keep=True):
        xb, shape = self._as_batch(X)
        p = self._p
        phi = noise_features(sigma, len(xb)) if self.film else None
        h = xb
        tape = []
        last = len(self.convs) - 1
        for i, conv in enumerate(self.convs):
            pre, cache = conv.forward(h, p[f"w{i}"], p.get(f"b{i}"))
            if i == last:
                h = pre
                tape.append({"conv": cache})
                break
            rec = {"conv": cache}
            if self.norm == "instance":
                pre, rec["inv"] = instance_norm(pre)
                rec["normed"] = pre
            if self.film:
                gain = 1.0 + (phi @ p[f"gamma{i}"])[:, None, None, :]
                rec["film_in"], rec["gain"] = pre, gain
                pre = pre * gain + (phi @ p[f"beta{i}"])[:, None, None, :]
            h, sig = silu(pre)
            rec["pre"], rec["sig"] = pre, sig
            tape.append(rec if keep else None)
        skip, skip_cache = self.skip.forward(xb, p["w_skip"], p["b_skip"])
        tape.append(skip_cache)
        if not keep:
            tape = None
        return (h + skip).reshape(shape), (tape, phi)

    def score(self, X, sigma):
        X = np.asarray(X, dtype=np.float64)
        s = _sigma_array(sigma, X)
        return self.f(X, sigma) / s

    def scaled_score_and_vjp(self, X, sigma):
        """Return ``sigma * s(X, sigma)`` and a function mapping its cotangent to ``d/dtheta``."""
        _sigma_array(sigma, np.asarray(X))
        out, (tape, phi) = self._forward(X, sigma)
        shape = np.shape(X)

        def vjp(dout):
            p = self._p
            grad = np.zeros(self.layout.size)
            g = self.layout.views(grad)
            d = np.asarray(dout, dtype=np.float64).reshape((-1,) + shape[-3:])
            self.skip.backward(tape[-1], d, p["w_skip"], g["w_skip"], g["b_skip"])
            last = len(self.convs) - 1
            for i in range(last, -1, -1):
                if i < last:
                    rec = tape[i]
                    d = silu_backward(d, rec["pre"], rec["sig"])
                    if self.film:
                        g[f"beta{i}"] += phi.T @ d.sum(axis=(1, 2))
                        g[f"gamma{i}"] += phi.T @ (d * rec["film_in"]).sum(axis=(1, 2))
                        d = d * rec["gain"]
                    if self.norm == "instance":
                        d = instance_norm_backward(d, rec["normed"], rec["inv"])
                d = self.convs[i].backward(tape[i]["conv"], d, p[f"w{i}"], g[f"w{i}"], g.get(f"b{i}"),
                                           input_grad=i > 0)
            return grad

        return out, vjp


class LinearScoreHead:
    """Elementwise affine score ``s(x) = a * x + b`` for a fixed noise level.

    ``a`` and ``b`` have the image's shape, i.e. the linear map is diagonal.
    """

    kind = "linear"

    def __init__(self, shape, theta=None):
        self.shape = tuple(int(s) for s in shape)
        self.layout = ParamLayout({"a": self.shape, "b": self.shape})
        self.set_theta(np.zeros(self.layout.size) if theta is None else theta)

    @property
    def theta(self):
        return self._theta

    def set_theta(self, theta):
        theta = np.array(theta, dtype=np.float64)
        if theta.shape != (self.layout.size,):
            raise ValueError(f"expected {self.layout.size} parameters, got {theta.shape}")
        self._theta = theta
        self._p = self.layout.views(self._theta)

    @property
    def a(self):
        return self._p["a"]

    @property
    def b(self):
        return self._p["b"]

    @property
    def n_params(self):
        return self.layout.size

    def descriptor(self):
        return {"kind": self.kind, "shape": list(self.shape)}

    def copy(self):
        return LinearScoreHead(self.shape, self._theta.copy())

    def score(self, X, sigma):
        X = np.asarray(X, dtype=np.float64)
        _sigma_array(sigma, X)
        return self.a * X + self.b

    def scaled_score_and_vjp(self, X, sigma):
        X = np.asarray(X, dtype=np.float64)
        s = _sigma_array(sigma, X)
        out = s * (self.a * X + self.b)

        def vjp(dout):
            grad = np.zeros(self.layout.size)
            g = self.layout.views(grad)
            sd = s * dout
            lead = tuple(range(sd.ndim - len(self.shape)))
            g["a"][...] = np.sum(sd * X, axis=lead)
            g["b"][...] = np.sum(np.broadcast_to(sd, X.shape), axis=lead)
            return grad

        return out, vjp


def build_network(descriptor, theta=None):
    kind = descriptor["kind"]
    if kind == "conv":
        return ConvScoreNet(
            descriptor["channels"],
            descriptor.get("features", 32),
            descriptor.get("dilations", (1, 2, 4, 1)),
            descriptor.get("init_seed", 0),
            theta,
            descriptor.get("norm", "none"),
            descriptor.get("film", False),
        )
    if kind == "linear":
        return LinearScoreHead(descriptor["shape"], theta)
    raise ValueError(f"unknown network kind {kind!r}")
