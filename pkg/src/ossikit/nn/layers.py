"""Layer vocabulary with exact backpropagation.

Feature maps are numpy arrays (n, c, h, w). Layers are stateless in the
forward direction: ``forward`` returns the output plus an opaque cache, and
``backward`` consumes that cache, so a frozen network is safe to share
between threads. Trainable parameters live in ``layer.params`` and
non-trained state (batch-norm running statistics) in ``layer.buffers``.

Convolutions use the cross-correlation convention and go through the
backend im2col/col2im kernels so the main multiply is a BLAS matmul.
"""

from __future__ import annotations

import numpy as np

from ..backend import kernels
from ..errors import ShapeError


def _kaiming(rng: np.random.Generator | None, shape, fan_in: int, dtype) -> np.ndarray:
    if rng is None:
        return np.zeros(shape, dtype=dtype)
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Layer:
    TYPE = "layer"
    PARAM_ORDER: tuple[str, ...] = ()
    BUFFER_ORDER: tuple[str, ...] = ()
    N_INPUTS = 1

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def spec(self) -> dict:
        return {"type": self.TYPE}

    def forward(self, xs, training):
        raise NotImplementedError

    def backward(self, dy, cache):
        raise NotImplementedError


class Conv2D(Layer):
    TYPE = "conv"
    PARAM_ORDER = ("w", "b")

    def __init__(self, k, in_c, out_c, stride=1, pad=0, rng=None, dtype=np.float32):
        super().__init__()
        self.k, self.in_c, self.out_c = k, in_c, out_c
        self.stride, self.pad = stride, pad
        self.params["w"] = _kaiming(rng, (out_c, in_c, k, k), in_c * k * k, dtype)
        self.params["b"] = np.zeros(out_c, dtype=dtype)

    def spec(self):
        return {"type": self.TYPE, "k": self.k, "in_c": self.in_c, "out_c": self.out_c,
                "stride": self.stride, "pad": self.pad}

    def forward(self, xs, training):
        (x,) = xs
        if x.ndim != 4 or x.shape[1] != self.in_c:
            raise ShapeError(f"conv expects (n,{self.in_c},h,w), got {x.shape}")
        n, _, h, w = x.shape
        oh, ow = kernels.conv_out_hw(h, w, self.k, self.stride, self.pad)
        if oh < 1 or ow < 1:
            raise ShapeError(f"conv output dims collapse for input {x.shape}")
        cols = kernels.im2col(x, self.k, self.stride, self.pad)
        wmat = self.params["w"].reshape(self.out_c, -1)
        y = cols @ wmat.T + self.params["b"]
        y = np.ascontiguousarray(y.reshape(n, oh, ow, self.out_c).transpose(0, 3, 1, 2))
        return y, x

    def backward(self, dy, cache):
        x = cache
        n, _, h, w = x.shape
        cols = kernels.im2col(x, self.k, self.stride, self.pad)
        dyr = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(-1, self.out_c)
        dw = (dyr.T @ cols).reshape(self.params["w"].shape)
        db = dyr.sum(axis=0, dtype=np.float64).astype(dy.dtype)
        dcols = dyr @ self.params["w"].reshape(self.out_c, -1)
        dx = kernels.col2im(dcols, n, self.in_c, h, w, self.k, self.stride, self.pad)
        return [dx], {"w": dw, "b": db}


class TransposedConv2D(Layer):
    """Strided transposed convolution; with k = stride the upsampling is
    overlap-free, which is what the decoder uses to avoid checkerboarding
    concerns entirely on the U-Net path."""

    TYPE = "tconv"
    PARAM_ORDER = ("w", "b")

    def __init__(self, k, in_c, out_c, stride=2, rng=None, dtype=np.float32):
        super().__init__()
        self.k, self.in_c, self.out_c, self.stride = k, in_c, out_c, stride
        self.params["w"] = _kaiming(rng, (in_c, out_c, k, k), in_c, dtype)
        self.params["b"] = np.zeros(out_c, dtype=dtype)

    def spec(self):
        return {"type": self.TYPE, "k": self.k, "in_c": self.in_c, "out_c": self.out_c,
                "stride": self.stride}

    def forward(self, xs, training):
        (x,) = xs
        if x.ndim != 4 or x.shape[1] != self.in_c:
            raise ShapeError(f"tconv expects (n,{self.in_c},h,w), got {x.shape}")
        n, _, h, w = x.shape
        k, s = self.k, self.stride
        oh, ow = (h - 1) * s + k, (w - 1) * s + k
        xt = np.ascontiguousarray(x.transpose(0, 2, 3, 1)).reshape(-1, self.in_c)
        z = (xt @ self.params["w"].reshape(self.in_c, -1)).reshape(n, h, w, self.out_c, k, k)
        y = np.zeros((n, self.out_c, oh, ow), dtype=x.dtype)
        for a in range(k):
            for b in range(k):
                y[:, :, a : a + s * h : s, b : b + s * w : s] += z[..., a, b].transpose(0, 3, 1, 2)
        y += self.params["b"][:, None, None]
        return y, x

    def backward(self, dy, cache):
        x = cache
        n, _, h, w = x.shape
        k, s = self.k, self.stride
        dz = np.empty((n, h, w, self.out_c, k, k), dtype=dy.dtype)
        for a in range(k):
            for b in range(k):
                dz[..., a, b] = dy[:, :, a : a + s * h : s, b : b + s * w : s].transpose(0, 2, 3, 1)
        dzm = dz.reshape(-1, self.out_c * k * k)
        xt = np.ascontiguousarray(x.transpose(0, 2, 3, 1)).reshape(-1, self.in_c)
        dw = (xt.T @ dzm).reshape(self.params["w"].shape)
        db = dy.sum(axis=(0, 2, 3), dtype=np.float64).astype(dy.dtype)
        dx = (dzm @ self.params["w"].reshape(self.in_c, -1).T).reshape(n, h, w, self.in_c)
        dx = np.ascontiguousarray(dx.transpose(0, 3, 1, 2))
        return [dx], {"w": dw, "b": db}


class ReLU(Layer):
    TYPE = "relu"

    def forward(self, xs, training):
        (x,) = xs
        mask = x > 0  # subgradient at exactly 0 is taken as 0
        return x * mask, mask

    def backward(self, dy, cache):
        return [dy * cache], {}


class Sigmoid(Layer):
    TYPE = "sigmoid"

    def forward(self, xs, training):
        (x,) = xs
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        y[~pos] = ex / (1.0 + ex)
        return y, y

    def backward(self, dy, cache):
        y = cache
        return [dy * y * (1.0 - y)], {}


class MaxPool2(Layer):
    TYPE = "maxpool2"

    def forward(self, xs, training):
        (x,) = xs
        y, idx = kernels.maxpool2_forward(x)
        return y, (idx, x.shape[2], x.shape[3])

    def backward(self, dy, cache):
        idx, h, w = cache
        return [kernels.maxpool2_backward(dy, idx, h, w)], {}


class BilinearUp2(Layer):
    TYPE = "up2"

    def forward(self, xs, training):
        return kernels.up2_forward(xs[0]), None

    def backward(self, dy, cache):
        return [kernels.up2_backward(dy)], {}


class BatchNorm(Layer):
    TYPE = "batchnorm"
    PARAM_ORDER = ("gamma", "beta")
    BUFFER_ORDER = ("running_mean", "running_var")

    def __init__(self, c, momentum=0.1, eps=1e-5, dtype=np.float32):
        super().__init__()
        self.c, self.momentum, self.eps = c, momentum, eps
        self.params["gamma"] = np.ones(c, dtype=dtype)
        self.params["beta"] = np.zeros(c, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(c, dtype=dtype)
        self.buffers["running_var"] = np.ones(c, dtype=dtype)

    def spec(self):
        return {"type": self.TYPE, "c": self.c, "momentum": self.momentum, "eps": self.eps}

    def forward(self, xs, training):
        (x,) = xs
        if x.shape[1] != self.c:
            raise ShapeError(f"batchnorm expects {self.c} channels, got {x.shape}")
        if training:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            m = x.dtype.type(self.momentum)
            self.buffers["running_mean"] *= 1 - m
            self.buffers["running_mean"] += m * mean
            self.buffers["running_var"] *= 1 - m
            self.buffers["running_var"] += m * var
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        invstd = 1.0 / np.sqrt(var + x.dtype.type(self.eps))
        xhat = (x - mean[:, None, None]) * invstd[:, None, None]
        y = self.params["gamma"][:, None, None] * xhat + self.params["beta"][:, None, None]
        return y, (xhat, invstd, training)

    def backward(self, dy, cache):
        xhat, invstd, training = cache
        dgamma = (dy * xhat).sum(axis=(0, 2, 3), dtype=np.float64).astype(dy.dtype)
        dbeta = dy.sum(axis=(0, 2, 3), dtype=np.float64).astype(dy.dtype)
        g = self.params["gamma"][:, None, None] * invstd[:, None, None]
        if training:
            n = dy.shape[0] * dy.shape[2] * dy.shape[3]
            dx = (g / n) * (
                n * dy - dbeta[:, None, None] - xhat * dgamma[:, None, None]
            )
        else:
            dx = g * dy
        return [dx.astype(dy.dtype, copy=False)], {"gamma": dgamma, "beta": dbeta}


class ConcatSkip(Layer):
    """Channel concatenation of (trunk, skip); ``mute`` zeroes the skip
    branch for ablation without changing shapes."""

    TYPE = "concat"
    N_INPUTS = 2

    def __init__(self):
        super().__init__()
        self.mute = False

    def forward(self, xs, training):
        a, b = xs
        if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
            raise ShapeError(f"concat dims mismatch: {a.shape} vs {b.shape}")
        if self.mute:
            b = np.zeros_like(b)
        return np.concatenate([a, b], axis=1), (a.shape[1], self.mute)

    def backward(self, dy, cache):
        c0, muted = cache
        da = np.ascontiguousarray(dy[:, :c0])
        db = np.zeros_like(dy[:, c0:]) if muted else np.ascontiguousarray(dy[:, c0:])
        return [da, db], {}


class ResidualSubtract(Layer):
    """out = xs[0] - xs[1]; used for residual-prediction heads."""

    TYPE = "subtract"
    N_INPUTS = 2

    def forward(self, xs, training):
        a, b = xs
        if a.shape != b.shape:
            raise ShapeError(f"subtract dims mismatch: {a.shape} vs {b.shape}")
        return a - b, None

    def backward(self, dy, cache):
        return [dy, -dy], {}


LAYER_TYPES = {
    cls.TYPE: cls
    for cls in (Conv2D, TransposedConv2D, ReLU, Sigmoid, MaxPool2, BilinearUp2,
                BatchNorm, ConcatSkip, ResidualSubtract)
}


def layer_from_spec(spec: dict, dtype=np.float32) -> Layer:
    kind = spec.get("type")
    if kind not in LAYER_TYPES:
        raise ShapeError(f"unknown layer type {kind!r}")
    kwargs = {k: v for k, v in spec.items() if k != "type"}
    cls = LAYER_TYPES[kind]
    if cls in (Conv2D, TransposedConv2D, BatchNorm):
        return cls(dtype=dtype, **kwargs)
    return cls(**kwargs)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error (accumulated in float64) and its gradient."""
    if pred.shape != target.shape:
        raise ShapeError(f"loss dims mismatch: {pred.shape} vs {target.shape}")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(pred.dtype)
