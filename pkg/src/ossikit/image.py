"""2-D image primitives shared by the whole pipeline.

An image is a plain numpy array of shape ``(height, width)``, float32,
row-major, with y (the illumination-pattern axis) as the row index.
Intensities live in memory as 32-bit floats; sums and interpolation run in
64-bit. An image is "normalized" when all values lie in [0, 1].

On-disk formats:

* ``IMF1`` raw floats: magic ``IMF1``, two little-endian uint32 dims
  (height, width), then height*width little-endian float32, row-major.
  Round trips are bit-exact.
* 16-bit grayscale PNG (via Pillow) or PGM (P5, maxval 65535, big-endian)
  for human-viewable export; [0, 1] maps linearly onto [0, 65535].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvalidInputError

IMF1_MAGIC = b"IMF1"
_MAX_DIM = 1 << 20


def as_image(data, copy: bool = False) -> np.ndarray:
    """Validate and coerce ``data`` to a float32 (H, W) image array."""
    img = np.array(data, dtype=np.float32, copy=True) if copy else np.asarray(data, dtype=np.float32)
    if img.ndim != 2 or img.size == 0:
        raise InvalidInputError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise InvalidInputError("image contains NaN or Inf")
    return img


def normalize(img) -> np.ndarray:
    """Affinely map an image onto [0, 1]; a constant image maps to all zeros.

    Idempotent: normalizing a normalized image returns it bit-exactly.
    """
    img = as_image(img)
    lo = img.min()
    hi = img.max()
    if hi == lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned crop window: top-left corner (x0, y0), extent (h, w)."""

    x0: int
    y0: int
    h: int
    w: int

    def __post_init__(self):
        if self.x0 < 0 or self.y0 < 0:
            raise InvalidInputError(f"rect origin must be non-negative, got ({self.x0}, {self.y0})")
        if self.h < 1 or self.w < 1:
            raise InvalidInputError(f"rect extent must be positive, got ({self.h}, {self.w})")


def crop(img, rect: Rect) -> np.ndarray:
    """Extract ``rect`` from ``img``; out-of-bounds rects are rejected."""
    img = as_image(img)
    h, w = img.shape
    if rect.y0 + rect.h > h or rect.x0 + rect.w > w:
        raise InvalidInputError(
            f"rect {(rect.x0, rect.y0, rect.h, rect.w)} exceeds image bounds {(h, w)}"
        )
    return img[rect.y0 : rect.y0 + rect.h, rect.x0 : rect.x0 + rect.w].copy()


def _axis_coords(n_src: int, n_dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Corner-aligned source positions for each destination index.
    if n_dst == 1:
        pos = np.array([0.5 * (n_src - 1)])
    else:
        pos = np.arange(n_dst, dtype=np.float64) * ((n_src - 1) / (n_dst - 1))
    i0 = np.floor(pos).astype(np.intp)
    np.clip(i0, 0, n_src - 1, out=i0)
    i1 = np.minimum(i0 + 1, n_src - 1)
    t = pos - i0
    return i0, i1, t


def resize_bilinear(img, height: int, width: int) -> np.ndarray:
    """Bilinear resample to (height, width) on a corner-aligned grid.

    Source corners map to destination corners; a same-size resize is the
    identity bit-for-bit. Outputs are convex combinations of inputs, so the
    global min/max bounds of ``img`` are preserved.
    """
    img = as_image(img)
    if height < 1 or width < 1:
        raise InvalidInputError(f"target dims must be positive, got ({height}, {width})")
    work = img.astype(np.float64)
    i0, i1, ty = _axis_coords(img.shape[0], height)
    work = work[i0] * (1.0 - ty)[:, None] + work[i1] * ty[:, None]
    j0, j1, tx = _axis_coords(img.shape[1], width)
    work = work[:, j0] * (1.0 - tx)[None, :] + work[:, j1] * tx[None, :]
    return work.astype(np.float32)


def translate(img, dx: float, dy: float) -> np.ndarray:
    """Shift content by (dx, dy) pixels (bilinear, edge-replicated).

    Positive dx moves content toward larger x (right), positive dy toward
    larger y (down). Source coordinates are clamped to the frame, so
    out-of-frame regions replicate the nearest edge.
    """
    img = as_image(img)
    if not (np.isfinite(dx) and np.isfinite(dy)):
        raise InvalidInputError("translation must be finite")
    h, w = img.shape
    work = img.astype(np.float64)

    ys = np.clip(np.arange(h, dtype=np.float64) - dy, 0.0, h - 1.0)
    i0 = np.floor(ys).astype(np.intp)
    i1 = np.minimum(i0 + 1, h - 1)
    ty = ys - i0
    work = work[i0] * (1.0 - ty)[:, None] + work[i1] * ty[:, None]

    xs = np.clip(np.arange(w, dtype=np.float64) - dx, 0.0, w - 1.0)
    j0 = np.floor(xs).astype(np.intp)
    j1 = np.minimum(j0 + 1, w - 1)
    tx = xs - j0
    work = work[:, j0] * (1.0 - tx)[None, :] + work[:, j1] * tx[None, :]
    return work.astype(np.float32)


def save_imf1(img, path) -> None:
    """Write the raw-float IMF1 format (bit-exact round trip)."""
    img = as_image(img)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(IMF1_MAGIC)
        f.write(struct.pack("<II", h, w))
        f.write(np.ascontiguousarray(img, dtype="<f4").tobytes())


def load_imf1(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12:
        raise FormatError(f"{path}: truncated IMF1 header")
    if blob[:4] != IMF1_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    h, w = struct.unpack("<II", blob[4:12])
    if h == 0 or w == 0 or h > _MAX_DIM or w > _MAX_DIM:
        raise FormatError(f"{path}: unreasonable dims ({h}, {w})")
    expected = 12 + 4 * h * w
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", count=h * w, offset=12)
    img = data.reshape(h, w).astype(np.float32)
    if not np.all(np.isfinite(img)):
        raise FormatError(f"{path}: non-finite pixel values")
    return img


def _quantize_u16(img: np.ndarray) -> np.ndarray:
    q = np.clip(img.astype(np.float64), 0.0, 1.0) * 65535.0
    return np.round(q).astype(np.uint16)


def save_u16(img, path) -> None:
    """Export as a 16-bit grayscale raster (.png via Pillow, or .pgm).

    Values are clipped to [0, 1] then mapped linearly to [0, 65535];
    quantization error for normalized images is at most 1/65535.
    """
    img = as_image(img)
    q = _quantize_u16(img)
    path = str(path)
    if path.lower().endswith(".pgm"):
        h, w = q.shape
        with open(path, "wb") as f:
            f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
            f.write(q.astype(">u2").tobytes())
        return
    from PIL import Image

    Image.fromarray(q).save(path)


def load_u16(path) -> np.ndarray:
    """Read a 16-bit grayscale raster back as a float32 image in [0, 1]."""
    path = str(path)
    if path.lower().endswith(".pgm"):
        with open(path, "rb") as f:
            blob = f.read()
        fields = blob.split(maxsplit=4)
        if len(fields) < 5 or fields[0] != b"P5":
            raise FormatError(f"{path}: not a binary PGM")
        try:
            w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
        except ValueError as e:
            raise FormatError(f"{path}: malformed PGM header") from e
        if maxval != 65535:
            raise FormatError(f"{path}: expected 16-bit PGM, maxval {maxval}")
        data = fields[4][: 2 * h * w]
        if len(data) != 2 * h * w:
            raise FormatError(f"{path}: truncated PGM payload")
        q = np.frombuffer(data, dtype=">u2").reshape(h, w)
    else:
        from PIL import Image

        q = np.asarray(Image.open(path))
        if q.ndim != 2:
            raise FormatError(f"{path}: expected single-channel raster")
    return (q.astype(np.float64) / 65535.0).astype(np.float32)
