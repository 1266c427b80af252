"""Pure-numpy implementations of the hot inner-loop kernels.

Reference path for the numba-jitted kernels in ``kernels_numba``; selected
at import time by ``ossikit.backend`` (env var ``OSSIKIT_NO_NUMBA=1`` forces
this module). Both modules expose the same function surface.

Conventions: feature maps are (n, c, h, w); convolution gathers go through
im2col so the multiply itself is a BLAS matmul either way.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_out_hw(h: int, w: int, k: int, stride: int, pad: int) -> tuple[int, int]:
    return (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """Gather conv patches: (n, c, h, w) -> (n*oh*ow, c*k*k)."""
    n, c, h, w = x.shape
    oh, ow = conv_out_hw(h, w, k, stride, pad)
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
    return np.ascontiguousarray(cols)


def col2im(dcols: np.ndarray, n: int, c: int, h: int, w: int, k: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add patch gradients back onto the input: adjoint of im2col."""
    oh, ow = conv_out_hw(h, w, k, stride, pad)
    d = dcols.reshape(n, oh, ow, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    for ki in range(k):
        for kj in range(k):
            dxp[:, :, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride] += d[:, :, ki, kj]
    if pad > 0:
        dxp = dxp[:, :, pad : pad + h, pad : pad + w]
    return np.ascontiguousarray(dxp)


def maxpool2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2/stride-2 max pooling; returns values and the argmax index (0..3).

    The window is scanned row-major, so ties resolve to the first index.
    Odd trailing rows/columns are dropped (floor mode).
    """
    n, c, h, w = x.shape
    oh, ow = h // 2, w // 2
    win = (
        x[:, :, : 2 * oh, : 2 * ow]
        .reshape(n, c, oh, 2, ow, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, oh, ow, 4)
    )
    idx = win.argmax(axis=4)
    y = np.take_along_axis(win, idx[..., None], axis=4)[..., 0]
    return np.ascontiguousarray(y), idx.astype(np.uint8)


def maxpool2_backward(dy: np.ndarray, idx: np.ndarray, h: int, w: int) -> np.ndarray:
    n, c, oh, ow = dy.shape
    buf = np.zeros((n, c, oh, ow, 4), dtype=dy.dtype)
    np.put_along_axis(buf, idx[..., None].astype(np.intp), dy[..., None], axis=4)
    dx = np.zeros((n, c, h, w), dtype=dy.dtype)
    dx[:, :, : 2 * oh, : 2 * ow] = (
        buf.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * oh, 2 * ow)
    )
    return dx


def _up2_axis(x: np.ndarray, axis_len: int) -> np.ndarray:
    # Doubles the second-to-last axis: out[2i] = x[i], out[2i+1] = mean of
    # neighbours, last row replicates the edge. Weights are powers of two,
    # so the map is exactly linear in floating point on integer-valued data.
    h = axis_len
    out = np.empty(x.shape[:-2] + (2 * h, x.shape[-1]), dtype=x.dtype)
    out[..., 0::2, :] = x
    if h > 1:
        out[..., 1 : 2 * h - 1 : 2, :] = (x[..., : h - 1, :] + x[..., 1:, :]) * x.dtype.type(0.5)
    out[..., 2 * h - 1, :] = x[..., h - 1, :]
    return out


def up2_forward(x: np.ndarray) -> np.ndarray:
    """Bilinear 2x upsampling of (n, c, h, w) feature maps."""
    n, c, h, w = x.shape
    t = _up2_axis(x, h)
    t = _up2_axis(t.swapaxes(2, 3), w).swapaxes(2, 3)
    return np.ascontiguousarray(t)


def _up2_axis_adj(d: np.ndarray, h: int) -> np.ndarray:
    x = d[..., 0::2, :].copy()
    if h > 1:
        mid = d[..., 1 : 2 * h - 1 : 2, :] * d.dtype.type(0.5)
        x[..., : h - 1, :] += mid
        x[..., 1:, :] += mid
    x[..., h - 1, :] += d[..., 2 * h - 1, :]
    return x


def up2_backward(dy: np.ndarray) -> np.ndarray:
    """Adjoint of ``up2_forward`` (exact transpose of the linear map)."""
    n, c, hh, ww = dy.shape
    t = _up2_axis_adj(dy.swapaxes(2, 3), ww // 2).swapaxes(2, 3)
    t = _up2_axis_adj(t, hh // 2)
    return np.ascontiguousarray(t)


def polygon_render(px: np.ndarray, py: np.ndarray, y0: int, x0: int, hh: int, ww: int, sigma: float) -> np.ndarray:
    """Rasterize a closed polygon as rim + plateau intensities.

    For each pixel centre inside the polygon the value is
    exp(-d^2 / (2 sigma^2)) + 0.25 where d is the distance to the closest
    boundary segment; outside pixels are exactly zero.
    """
    ys = (y0 + np.arange(hh, dtype=np.float64))[:, None, None]
    xs = (x0 + np.arange(ww, dtype=np.float64))[None, :, None]
    ax, ay = px[None, None, :], py[None, None, :]
    bx, by = np.roll(px, -1)[None, None, :], np.roll(py, -1)[None, None, :]

    crosses = (ay > ys) != (by > ys)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = ax + (ys - ay) * (bx - ax) / (by - ay)
    inside = (np.sum(crosses & (xs < xint), axis=2) % 2).astype(bool)

    ex, ey = bx - ax, by - ay
    seg2 = ex * ex + ey * ey
    t = np.clip(((xs - ax) * ex + (ys - ay) * ey) / np.maximum(seg2, 1e-300), 0.0, 1.0)
    ddx = xs - (ax + t * ex)
    ddy = ys - (ay + t * ey)
    d2 = np.min(ddx * ddx + ddy * ddy, axis=2)

    out = np.where(inside, np.exp(-d2 / (2.0 * sigma * sigma)) + 0.25, 0.0)
    return out
