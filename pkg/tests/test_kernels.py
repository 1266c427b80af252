"""Parity and adjointness checks between the numba and numpy kernel paths."""

import numpy as np
import pytest

from ossikit import kernels_numpy as knp

try:
    from ossikit import kernels_numba as knb

    BACKENDS = [("numpy", knp), ("numba", knb)]
except ImportError:
    knb = None
    BACKENDS = [("numpy", knp)]

needs_numba = pytest.mark.skipif(knb is None, reason="numba unavailable")


@needs_numba
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("k,stride,pad", [(3, 1, 1), (3, 2, 1), (2, 2, 0), (1, 1, 0), (5, 1, 2)])
def test_im2col_paths_bit_identical(dtype, k, stride, pad):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 9, 8)).astype(dtype)
    assert np.array_equal(knp.im2col(x, k, stride, pad), knb.im2col(x, k, stride, pad))


@needs_numba
@pytest.mark.parametrize("k,stride,pad", [(3, 1, 1), (3, 2, 1), (2, 2, 0)])
def test_col2im_paths_agree(k, stride, pad):
    rng = np.random.default_rng(1)
    n, c, h, w = 2, 3, 9, 8
    oh, ow = knp.conv_out_hw(h, w, k, stride, pad)
    d = rng.normal(size=(n * oh * ow, c * k * k))
    a = knp.col2im(d, n, c, h, w, k, stride, pad)
    b = knb.col2im(d, n, c, h, w, k, stride, pad)
    assert np.allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("name,mod", BACKENDS)
def test_col2im_is_adjoint_of_im2col(name, mod):
    rng = np.random.default_rng(2)
    n, c, h, w, k, stride, pad = 2, 2, 7, 6, 3, 2, 1
    oh, ow = mod.conv_out_hw(h, w, k, stride, pad)
    x = rng.normal(size=(n, c, h, w))
    u = rng.normal(size=(n * oh * ow, c * k * k))
    lhs = np.sum(mod.im2col(x, k, stride, pad) * u)
    rhs = np.sum(x * mod.col2im(u, n, c, h, w, k, stride, pad))
    assert abs(lhs - rhs) < 1e-9 * max(abs(lhs), 1.0)


@needs_numba
def test_maxpool_paths_bit_identical():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 3, 8, 10)).astype(np.float32)
    ya, ia = knp.maxpool2_forward(x)
    yb, ib = knb.maxpool2_forward(x)
    assert np.array_equal(ya, yb)
    assert np.array_equal(ia, ib)
    dy = rng.normal(size=ya.shape).astype(np.float32)
    assert np.array_equal(knp.maxpool2_backward(dy, ia, 8, 10), knb.maxpool2_backward(dy, ib, 8, 10))


@pytest.mark.parametrize("name,mod", BACKENDS)
def test_maxpool_tie_break_first_index(name, mod):
    x = np.ones((1, 1, 2, 2), dtype=np.float32)
    y, idx = mod.maxpool2_forward(x)
    assert y[0, 0, 0, 0] == 1.0
    assert idx[0, 0, 0, 0] == 0  # window scanned row-major; ties go to (0, 0)
    dx = mod.maxpool2_backward(np.full((1, 1, 1, 1), 2.0, np.float32), idx, 2, 2)
    assert np.array_equal(dx[0, 0], np.array([[2.0, 0.0], [0.0, 0.0]], dtype=np.float32))


@pytest.mark.parametrize("name,mod", BACKENDS)
def test_maxpool_floor_mode_drops_odd_edges(name, mod):
    x = np.arange(35, dtype=np.float32).reshape(1, 1, 5, 7)
    y, _ = mod.maxpool2_forward(x)
    assert y.shape == (1, 1, 2, 3)


@needs_numba
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_up2_paths_bit_identical(dtype):
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 3, 5, 4)).astype(dtype)
    assert np.array_equal(knp.up2_forward(x), knb.up2_forward(x))
    dy = rng.normal(size=(2, 3, 10, 8)).astype(dtype)
    assert np.allclose(knp.up2_backward(dy), knb.up2_backward(dy), atol=1e-12)


@pytest.mark.parametrize("name,mod", BACKENDS)
def test_up2_even_samples_copy_input(name, mod):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(1, 2, 4, 3))
    y = mod.up2_forward(x)
    assert y.shape == (1, 2, 8, 6)
    assert np.array_equal(y[:, :, 0::2, 0::2], x)


@pytest.mark.parametrize("name,mod", BACKENDS)
def test_up2_backward_is_adjoint(name, mod):
    rng = np.random.default_rng(6)
    x = rng.normal(size=(2, 2, 5, 3))
    dy = rng.normal(size=(2, 2, 10, 6))
    lhs = np.sum(mod.up2_forward(x) * dy)
    rhs = np.sum(x * mod.up2_backward(dy))
    assert abs(lhs - rhs) < 1e-10 * max(abs(lhs), 1.0)


@needs_numba
def test_polygon_render_paths_bit_identical():
    theta = np.linspace(0, 2 * np.pi, 40, endpoint=False)
    px = 20 + 12 * np.cos(theta)
    py = 18 + 7 * np.sin(theta)
    a = knp.polygon_render(px, py, 0, 0, 40, 44, 1.3)
    b = knb.polygon_render(px, py, 0, 0, 40, 44, 1.3)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("name,mod", BACKENDS)
def test_polygon_render_interior_exterior(name, mod):
    theta = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    px = 16 + 10 * np.cos(theta)
    py = 16 + 10 * np.sin(theta)
    out = mod.polygon_render(px, py, 0, 0, 32, 32, 1.0)
    assert out[16, 16] > 0.2  # inside: plateau at least
    assert out[0, 0] == 0.0  # outside: exactly zero
    assert out[16, 7] > out[16, 16]  # rim brighter than center
