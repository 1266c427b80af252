import numpy as np
import pytest

from ossikit.bubbles import (BubbleSpec, SceneConfig, compose_scene, joukowski_boundary,
                             render_bubble)
from ossikit.errors import DegenerateShapeError, EmptyRenderError, InvalidInputError


def test_joukowski_r2_is_analytic_ellipse():
    pts = joukowski_boundary(2.0, n_points=256)
    a, b = 2.5, 1.5  # r + 1/r, r - 1/r
    resid = (pts[:, 0] / a) ** 2 + (pts[:, 1] / b) ** 2 - 1.0
    assert np.max(np.abs(resid)) < 1e-9


def test_joukowski_r1_degenerate():
    with pytest.raises(DegenerateShapeError):
        joukowski_boundary(1.0)


def test_joukowski_r12_semi_axes():
    pts = joukowski_boundary(1.2, n_points=512)
    assert abs(pts[:, 0].max() - (1.2 + 1.0 / 1.2)) < 1e-9  # 2.0333...
    assert abs(pts[:, 1].max() - (1.2 - 1.0 / 1.2)) < 1e-9  # 0.3666...


def test_joukowski_closed_and_validated():
    with pytest.raises(InvalidInputError):
        joukowski_boundary(2.0, n_points=4)
    with pytest.raises(InvalidInputError):
        joukowski_boundary(-1.0)


def test_bubble_spec_guard_band():
    with pytest.raises(InvalidInputError):
        BubbleSpec(center=(10, 10), scale=8.0, radius_param=1.01)
    BubbleSpec(center=(10, 10), scale=8.0, radius_param=1.06)  # just outside


def test_render_outside_canvas_raises():
    spec = BubbleSpec(center=(500.0, 500.0), scale=10.0)
    with pytest.raises(EmptyRenderError):
        render_bubble(spec, 64, 64)


def test_render_is_pure():
    spec = BubbleSpec(center=(30.0, 34.0), scale=18.0, rotation=0.4, aspect=0.2)
    a = render_bubble(spec, 64, 64)
    b = render_bubble(spec, 64, 64)
    assert np.array_equal(a, b)


def test_render_bounding_box_matches_ellipse_geometry():
    # r=2 ellipse semi-axes (2.5, 1.5); scale 20 -> extents 50 x 30 pixels
    spec = BubbleSpec(center=(32.0, 32.0), scale=20.0, rotation=0.0, aspect=0.0,
                      radius_param=2.0, rim_sharpness=0.5)
    img = render_bubble(spec, 64, 64)
    ys, xs = np.nonzero(img)
    width = xs.max() - xs.min() + 1
    height = ys.max() - ys.min() + 1
    assert abs(width - 20.0 * 2.5) <= 2.0
    assert abs(height - 20.0 * 1.5) <= 2.0


def test_render_values_normalized_rim_brighter_than_interior():
    spec = BubbleSpec(center=(32.0, 32.0), scale=24.0, rim_sharpness=1.0)
    img = render_bubble(spec, 64, 64)
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert img.max() == 1.0
    interior = img[32, 32]
    assert 0.0 < interior < 0.5  # plateau well below the rim


def _cfg(**kw):
    base = dict(height=64, width=64, count_range=(3, 8), scale_range=(6.0, 14.0),
                bottom_bias=2.0, background=0.05, seed=0)
    base.update(kw)
    return SceneConfig(**base)


def test_compose_scene_deterministic_under_seed():
    cfg = _cfg(seed=123)
    img1, specs1 = compose_scene(cfg, np.random.default_rng(cfg.seed))
    img2, specs2 = compose_scene(cfg, np.random.default_rng(cfg.seed))
    assert np.array_equal(img1, img2)
    assert specs1 == specs2


def test_compose_scene_zero_count_gives_background():
    cfg = _cfg(count_range=(0, 0), background=0.12)
    img, specs = compose_scene(cfg)
    assert specs == []
    assert np.array_equal(img, np.full((64, 64), np.float32(0.12)))


def test_compose_scene_normalized_and_above_background():
    cfg = _cfg(seed=7, background=0.08)
    img, specs = compose_scene(cfg, np.random.default_rng(7))
    assert len(specs) >= 1
    assert img.min() >= np.float32(0.08) - 1e-7
    assert img.max() <= 1.0


def test_bottom_bias_zero_uniform_histogram():
    # 10^4 draws of the vertical-center law against 3-sigma multinomial bounds
    h = 64
    rng = np.random.default_rng(42)
    ys = h * rng.random(10_000) ** (1.0 / (1.0 + 0.0))
    counts, _ = np.histogram(ys, bins=10, range=(0, h))
    expected = 1000.0
    sigma = np.sqrt(10_000 * 0.1 * 0.9)
    assert np.all(np.abs(counts - expected) < 3.0 * sigma)


def test_bottom_bias_monotone_in_mean_center():
    # same uniform draws, increasing bias -> strictly larger mean y
    rng = np.random.default_rng(11)
    u = rng.random(2000)
    means = [np.mean(64 * u ** (1.0 / (1.0 + b))) for b in (0.0, 1.0, 2.0, 4.0)]
    assert all(b > a for a, b in zip(means, means[1:]))


def test_compose_scene_bias_shifts_placement_downward():
    lo = _cfg(seed=5, bottom_bias=0.0, count_range=(30, 30), height=96, width=96)
    hi = _cfg(seed=5, bottom_bias=4.0, count_range=(30, 30), height=96, width=96)
    _, specs_lo = compose_scene(lo, np.random.default_rng(5))
    _, specs_hi = compose_scene(hi, np.random.default_rng(5))
    mean_lo = np.mean([s.center[1] for s in specs_lo])
    mean_hi = np.mean([s.center[1] for s in specs_hi])
    assert mean_hi > mean_lo


def test_scene_config_validation():
    with pytest.raises(InvalidInputError):
        _cfg(count_range=(5, 2))
    with pytest.raises(InvalidInputError):
        _cfg(background=1.0)
    with pytest.raises(InvalidInputError):
        _cfg(bottom_bias=-1.0)
