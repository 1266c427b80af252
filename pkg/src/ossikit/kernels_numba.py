"""Numba-jitted implementations of the hot inner-loop kernels.

Same surface as ``kernels_numpy``; selected by ``ossikit.backend`` when
numba imports cleanly and ``OSSIKIT_NO_NUMBA`` is unset. Loops are written
with fixed iteration order and per-element ownership so results do not
depend on the threading layer.
"""

from __future__ import annotations

import numpy as np
from numba import njit


def conv_out_hw(h: int, w: int, k: int, stride: int, pad: int) -> tuple[int, int]:
    return (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1


@njit(cache=True)
def _im2col(x, k, stride, pad, oh, ow):
    n, c, h, w = x.shape
    cols = np.zeros((n * oh * ow, c * k * k), dtype=x.dtype)
    for i in range(n):
        for oy in range(oh):
            for ox in range(ow):
                row = (i * oh + oy) * ow + ox
                ybase = oy * stride - pad
                xbase = ox * stride - pad
                col = 0
                for ci in range(c):
                    for ky in range(k):
                        yy = ybase + ky
                        if 0 <= yy < h:
                            for kx in range(k):
                                xx = xbase + kx
                                if 0 <= xx < w:
                                    cols[row, col + kx] = x[i, ci, yy, xx]
                        col += k
    return cols


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """Gather conv patches: (n, c, h, w) -> (n*oh*ow, c*k*k)."""
    oh, ow = conv_out_hw(x.shape[2], x.shape[3], k, stride, pad)
    return _im2col(np.ascontiguousarray(x), k, stride, pad, oh, ow)


@njit(cache=True)
def _col2im(dcols, n, c, h, w, k, stride, pad, oh, ow):
    dx = np.zeros((n, c, h, w), dtype=dcols.dtype)
    for i in range(n):
        for oy in range(oh):
            for ox in range(ow):
                row = (i * oh + oy) * ow + ox
                ybase = oy * stride - pad
                xbase = ox * stride - pad
                col = 0
                for ci in range(c):
                    for ky in range(k):
                        yy = ybase + ky
                        if 0 <= yy < h:
                            for kx in range(k):
                                xx = xbase + kx
                                if 0 <= xx < w:
                                    dx[i, ci, yy, xx] += dcols[row, col + kx]
                        col += k
    return dx


def col2im(dcols: np.ndarray, n: int, c: int, h: int, w: int, k: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add patch gradients back onto the input: adjoint of im2col."""
    oh, ow = conv_out_hw(h, w, k, stride, pad)
    return _col2im(np.ascontiguousarray(dcols), n, c, h, w, k, stride, pad, oh, ow)


@njit(cache=True)
def _maxpool2_forward(x):
    n, c, h, w = x.shape
    oh, ow = h // 2, w // 2
    y = np.empty((n, c, oh, ow), dtype=x.dtype)
    idx = np.empty((n, c, oh, ow), dtype=np.uint8)
    for i in range(n):
        for ci in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    best = x[i, ci, 2 * oy, 2 * ox]
                    bidx = np.uint8(0)
                    pos = 1
                    for dy in range(2):
                        for dx in range(2):
                            if dy == 0 and dx == 0:
                                continue
                            v = x[i, ci, 2 * oy + dy, 2 * ox + dx]
                            if v > best:
                                best = v
                                bidx = np.uint8(2 * dy + dx)
                            pos += 1
                    y[i, ci, oy, ox] = best
                    idx[i, ci, oy, ox] = bidx
    return y, idx


def maxpool2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2/stride-2 max pooling with first-index tie-break (floor mode)."""
    return _maxpool2_forward(np.ascontiguousarray(x))


@njit(cache=True)
def _maxpool2_backward(dy, idx, h, w):
    n, c, oh, ow = dy.shape
    dx = np.zeros((n, c, h, w), dtype=dy.dtype)
    for i in range(n):
        for ci in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    j = idx[i, ci, oy, ox]
                    dx[i, ci, 2 * oy + j // 2, 2 * ox + j % 2] = dy[i, ci, oy, ox]
    return dx


def maxpool2_backward(dy: np.ndarray, idx: np.ndarray, h: int, w: int) -> np.ndarray:
    return _maxpool2_backward(np.ascontiguousarray(dy), idx, h, w)


@njit(cache=True)
def _up2_forward(x):
    n, c, h, w = x.shape
    half = x.dtype.type(0.5)
    y = np.empty((n, c, 2 * h, 2 * w), dtype=x.dtype)
    for i in range(n):
        for ci in range(c):
            for yy in range(2 * h):
                sy = yy // 2
                ry = min(sy + 1, h - 1) if yy % 2 else sy
                for xx in range(2 * w):
                    sx = xx // 2
                    rx = min(sx + 1, w - 1) if xx % 2 else sx
                    a = x[i, ci, sy, sx]
                    b = x[i, ci, sy, rx]
                    cc = x[i, ci, ry, sx]
                    d = x[i, ci, ry, rx]
                    # rows first, then columns: matches kernels_numpy bit-for-bit
                    y[i, ci, yy, xx] = ((a + cc) * half + (b + d) * half) * half
    return y


def up2_forward(x: np.ndarray) -> np.ndarray:
    """Bilinear 2x upsampling of (n, c, h, w) feature maps."""
    return _up2_forward(np.ascontiguousarray(x))


@njit(cache=True)
def _up2_backward(dy):
    n, c, hh, ww = dy.shape
    h, w = hh // 2, ww // 2
    half = dy.dtype.type(0.5)
    dx = np.zeros((n, c, h, w), dtype=dy.dtype)
    for i in range(n):
        for ci in range(c):
            for yy in range(hh):
                sy = yy // 2
                ry = min(sy + 1, h - 1) if yy % 2 else sy
                for xx in range(ww):
                    sx = xx // 2
                    rx = min(sx + 1, w - 1) if xx % 2 else sx
                    g = dy[i, ci, yy, xx]
                    q = g * half * half
                    dx[i, ci, sy, sx] += q
                    dx[i, ci, sy, rx] += q
                    dx[i, ci, ry, sx] += q
                    dx[i, ci, ry, rx] += q
    return dx


def up2_backward(dy: np.ndarray) -> np.ndarray:
    """Adjoint of ``up2_forward`` (exact transpose of the linear map)."""
    return _up2_backward(np.ascontiguousarray(dy))


@njit(cache=True)
def _polygon_distance(px, py, y0, x0, hh, ww):
    m = px.shape[0]
    d2 = np.empty((hh, ww))
    inside = np.zeros((hh, ww), dtype=np.bool_)
    for iy in range(hh):
        yy = float(y0 + iy)
        for ix in range(ww):
            xx = float(x0 + ix)
            odd = False
            best = 1e300
            for s in range(m):
                ax, ay = px[s], py[s]
                t = s + 1
                if t == m:
                    t = 0
                bx, by = px[t], py[t]
                if (ay > yy) != (by > yy):
                    xint = ax + (yy - ay) * (bx - ax) / (by - ay)
                    if xx < xint:
                        odd = not odd
                ex, ey = bx - ax, by - ay
                seg2 = ex * ex + ey * ey
                if seg2 > 1e-300:
                    u = ((xx - ax) * ex + (yy - ay) * ey) / seg2
                    if u < 0.0:
                        u = 0.0
                    elif u > 1.0:
                        u = 1.0
                else:
                    u = 0.0
                ddx = xx - (ax + u * ex)
                ddy = yy - (ay + u * ey)
                q = ddx * ddx + ddy * ddy
                if q < best:
                    best = q
            d2[iy, ix] = best
            inside[iy, ix] = odd
    return d2, inside


def polygon_render(px: np.ndarray, py: np.ndarray, y0: int, x0: int, hh: int, ww: int, sigma: float) -> np.ndarray:
    """Rasterize a closed polygon as rim + plateau intensities."""
    d2, inside = _polygon_distance(
        np.ascontiguousarray(px, dtype=np.float64),
        np.ascontiguousarray(py, dtype=np.float64),
        y0, x0, hh, ww,
    )
    # the exp stays outside the jit so both backends share numpy's exp
    sigma = float(sigma)
    return np.where(inside, np.exp(-d2 / (2.0 * sigma * sigma)) + 0.25, 0.0)
