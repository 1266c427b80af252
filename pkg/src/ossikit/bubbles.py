"""Procedural bubble scenes.

A bubble boundary is the image of a circle |z| = r under the conformal map
w = z + 1/z, which is an ellipse with semi-axes (r + 1/r, |r - 1/r|). The
curve is sheared, rotated, scaled and translated onto the canvas, then
rasterized with a bright Gaussian rim around the boundary and a dimmer
interior plateau, which mimics how a depth profile of a near-spherical
bubble projects to intensity. Scenes scatter many such bubbles with a
configurable bias toward the bottom of the frame.

All randomness flows through explicit numpy Generators; scene i of a run
draws from ``default_rng((master_seed, i))`` so parallel and serial
generation agree bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .backend import kernels
from .errors import DegenerateShapeError, EmptyRenderError, InvalidInputError
from .image import as_image, normalize

_GUARD_LO, _GUARD_HI = 0.95, 1.05
_RENDER_POINTS = 192
_MAX_PLACE_ATTEMPTS = 10


@dataclass(frozen=True)
class BubbleSpec:
    """One bubble: placement, size, shape and rim parameters."""

    center: tuple[float, float]  # (x, y) in pixels
    scale: float  # rendered diameter multiplier, pixels per Joukowski unit pair
    aspect: float = 0.0  # shear factor applied before rotation
    rotation: float = 0.0
    radius_param: float = 2.0  # pre-image circle radius r of w = z + 1/z
    rim_sharpness: float = 1.5  # Gaussian rim width sigma, pixels

    def __post_init__(self):
        if self.scale <= 0.0:
            raise InvalidInputError(f"scale must be positive, got {self.scale}")
        if self.radius_param <= 0.0:
            raise InvalidInputError(f"radius_param must be positive, got {self.radius_param}")
        if _GUARD_LO < self.radius_param < _GUARD_HI:
            raise InvalidInputError(
                f"radius_param {self.radius_param} is inside the degenerate guard band "
                f"({_GUARD_LO}, {_GUARD_HI})"
            )
        if self.rim_sharpness <= 0.0:
            raise InvalidInputError(f"rim_sharpness must be positive, got {self.rim_sharpness}")


@dataclass(frozen=True)
class SceneConfig:
    """Knobs for random scene composition.

    Count/scale defaults suit 256x256 canvases; shrink scales for smaller
    frames. ``bottom_bias`` = 0 places bubbles uniformly in y; larger values
    skew placement toward the bottom edge.
    """

    height: int = 256
    width: int = 256
    count_range: tuple[int, int] = (5, 40)
    scale_range: tuple[float, float] = (4.0, 24.0)
    bottom_bias: float = 2.0
    background: float = 0.05
    seed: int = 0
    radius_range: tuple[float, float] = (1.1, 3.0)
    shear_range: tuple[float, float] = (-0.35, 0.35)
    rim_range: tuple[float, float] = (0.8, 2.0)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise InvalidInputError("canvas dims must be positive")
        if self.count_range[0] > self.count_range[1] or self.count_range[0] < 0:
            raise InvalidInputError(f"bad count_range {self.count_range}")
        if self.scale_range[0] <= 0 or self.scale_range[0] > self.scale_range[1]:
            raise InvalidInputError(f"bad scale_range {self.scale_range}")
        if self.bottom_bias < 0:
            raise InvalidInputError("bottom_bias must be >= 0")
        if not 0.0 <= self.background < 1.0:
            raise InvalidInputError("background must be in [0, 1)")


def joukowski_boundary(radius_param: float, n_points: int = 256) -> np.ndarray:
    """Sample the closed curve w = z + 1/z on |z| = r; returns (n, 2) xy points.

    The curve is an origin-centred ellipse with semi-axes (r + 1/r, |r - 1/r|);
    it collapses to a segment at r = 1.
    """
    if radius_param <= 0.0:
        raise InvalidInputError(f"radius_param must be positive, got {radius_param}")
    if n_points < 8:
        raise InvalidInputError(f"need n_points >= 8, got {n_points}")
    if abs(radius_param - 1.0) < 1e-9:
        raise DegenerateShapeError("r = 1 maps the circle onto a flat segment")
    theta = np.arange(n_points, dtype=np.float64) * (2.0 * np.pi / n_points)
    z = radius_param * np.exp(1j * theta)
    w = z + 1.0 / z
    return np.column_stack([w.real, w.imag])


def _transformed_boundary(spec: BubbleSpec, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    pts = joukowski_boundary(spec.radius_param, n_points)
    x, y = pts[:, 0], pts[:, 1]
    x = x + spec.aspect * y  # shear
    c, s = np.cos(spec.rotation), np.sin(spec.rotation)
    xr = c * x - s * y
    yr = s * x + c * y
    half = 0.5 * spec.scale
    return spec.center[0] + half * xr, spec.center[1] + half * yr


def render_bubble(spec: BubbleSpec, height: int, width: int, n_points: int = _RENDER_POINTS) -> np.ndarray:
    """Rasterize one bubble onto a (height, width) canvas, normalized to [0, 1].

    Raises EmptyRenderError when the bubble lies entirely outside the canvas.
    """
    if height < 1 or width < 1:
        raise InvalidInputError("canvas dims must be positive")
    px, py = _transformed_boundary(spec, n_points)
    x0 = max(int(np.floor(px.min())) - 1, 0)
    x1 = min(int(np.ceil(px.max())) + 2, width)
    y0 = max(int(np.floor(py.min())) - 1, 0)
    y1 = min(int(np.ceil(py.max())) + 2, height)
    if x0 >= x1 or y0 >= y1:
        raise EmptyRenderError("bubble bounding box does not intersect the canvas")
    patch = kernels.polygon_render(px, py, y0, x0, y1 - y0, x1 - x0, spec.rim_sharpness)
    if not patch.any():
        raise EmptyRenderError("no bubble pixel falls on the canvas")
    canvas = np.zeros((height, width), dtype=np.float32)
    canvas[y0:y1, x0:x1] = patch.astype(np.float32)
    return normalize(canvas)


def _draw_spec(cfg: SceneConfig, rng: np.random.Generator) -> BubbleSpec:
    # Fixed draw order keeps scenes reproducible across platforms.
    cx = rng.uniform(0.0, cfg.width)
    cy = cfg.height * rng.random() ** (1.0 / (1.0 + cfg.bottom_bias))
    scale = rng.uniform(*cfg.scale_range)
    rotation = rng.uniform(0.0, np.pi)
    shear = rng.uniform(*cfg.shear_range)
    radius = rng.uniform(*cfg.radius_range)
    rim = rng.uniform(*cfg.rim_range)
    return BubbleSpec(
        center=(float(cx), float(cy)),
        scale=float(scale),
        aspect=float(shear),
        rotation=float(rotation),
        radius_param=float(radius),
        rim_sharpness=float(rim),
    )


def compose_scene(
    cfg: SceneConfig, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, list[BubbleSpec]]:
    """Scatter a random number of bubbles onto a background canvas.

    Overlaps composite by per-pixel maximum; every bubble pixel therefore
    stays at or above the background level. Returns the normalized image
    and the specs actually rendered (for exact regeneration).
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    count = int(rng.integers(cfg.count_range[0], cfg.count_range[1], endpoint=True))
    image = np.full((cfg.height, cfg.width), np.float32(cfg.background), dtype=np.float32)
    placed: list[BubbleSpec] = []
    for _ in range(count):
        for _attempt in range(_MAX_PLACE_ATTEMPTS):
            spec = _draw_spec(cfg, rng)
            try:
                layer = render_bubble(spec, cfg.height, cfg.width)
            except EmptyRenderError:
                continue
            np.maximum(image, layer, out=image)
            placed.append(spec)
            break
    return image, placed


def scene_record(index: int, path: str, seed, specs: list[BubbleSpec]) -> dict:
    return {"index": index, "path": path, "seed": seed, "bubbles": [asdict(s) for s in specs]}


def save_scene_manifest(path, cfg: SceneConfig, records: list[dict]) -> None:
    doc = {"format": "ossikit-scenes/1", "config": asdict(cfg), "scenes": records}
    Path(path).write_text(json.dumps(doc, indent=2))


def load_scene_manifest(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "ossikit-scenes/1":
        raise InvalidInputError(f"{path}: not a scene manifest")
    return doc
