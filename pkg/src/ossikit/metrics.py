"""Classical notch-filter baseline and PSNR evaluation.

The notch filter rejects narrow Gaussian-profile bands around the pattern
frequency and its harmonics along the y (pattern) frequency axis, for all
x frequencies, preserving conjugate symmetry so the output is real. PSNR
uses peak 1.0 for normalized images; items with zero MSE produce an
infinity sentinel and are excluded from (but counted next to) means, and
table-level numbers are arithmetic means of per-image PSNRs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .image import as_image, load_imf1
from .noise import DatasetManifest

KINDS = ("2p", "sht")


@dataclass(frozen=True)
class NotchSpec:
    """Gaussian notches at k*center (k = 1..harmonics) cycles/pixel along y."""

    center: float
    bandwidth: float
    harmonics: int = 1

    def __post_init__(self):
        if not 0.0 < self.center < 0.5:
            raise InvalidInputError(f"center must be in (0, 0.5), got {self.center}")
        if self.bandwidth <= 0.0:
            raise InvalidInputError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.harmonics < 1:
            raise InvalidInputError(f"harmonics must be >= 1, got {self.harmonics}")


def notch_filter(img, spec: NotchSpec) -> np.ndarray:
    """Attenuate +-k*center bands along the y-frequency axis.

    The result is re-normalized by clipping to [0, 1] (filter ringing can
    slightly overshoot the valid range of a normalized image).
    """
    img = as_image(img)
    h = img.shape[0]
    fy = np.abs(np.fft.fftfreq(h))
    gain = np.ones(h)
    for k in range(1, spec.harmonics + 1):
        d = fy - k * spec.center
        gain *= 1.0 - np.exp(-(d * d) / (2.0 * spec.bandwidth**2))
    spec2d = np.fft.fft2(img.astype(np.float64))
    out = np.fft.ifft2(spec2d * gain[:, None]).real
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def psnr(reference, test, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) in dB; returns +inf for identical images."""
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    if ref.shape != tst.shape:
        raise InvalidInputError(f"dim mismatch: {ref.shape} vs {tst.shape}")
    if not peak > 0:
        raise InvalidInputError(f"peak must be positive, got {peak}")
    diff = ref - tst
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


@dataclass
class EvalReport:
    """Mean PSNR per artifact kind and method, Table-style."""

    methods: list[str]
    means: dict[str, dict[str, float | None]]  # row kind -> method -> mean dB
    inf_counts: dict[str, dict[str, int]] = field(default_factory=dict)
    n_items: dict[str, int] = field(default_factory=dict)

    def table(self) -> str:
        width = max(10, max((len(m) for m in self.methods), default=10) + 2)
        head = "kind".ljust(8) + "".join(m.rjust(width) for m in self.methods)
        lines = [head]
        for kind in (*KINDS, "overall"):
            if kind not in self.means:
                continue
            cells = []
            for m in self.methods:
                v = self.means[kind][m]
                cells.append(("inf" if v is None else f"{v:.2f}").rjust(width))
            lines.append(kind.ljust(8) + "".join(cells))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"methods": self.methods, "mean_psnr_db": self.means,
                "infinite_items": self.inf_counts, "n_items": self.n_items}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def evaluate(methods, manifest: DatasetManifest, root, shard: str = "test") -> EvalReport:
    """Score denoisers over one dataset shard.

    ``methods`` is a list of (name, fn) where fn maps a noisy image to a
    denoised one. Items are visited in manifest index order; per-image
    PSNRs are averaged per artifact kind and overall. Zero-MSE items are
    excluded from the means and tallied separately.
    """
    root = Path(root)
    items = sorted(manifest.shard_items(shard), key=lambda it: it["index"])
    if not items:
        raise InvalidInputError(f"no items in shard {shard!r}")
    names = [name for name, _ in methods]
    acc: dict[str, dict[str, list[float]]] = {k: {m: [] for m in names} for k in (*KINDS, "overall")}
    infs: dict[str, dict[str, int]] = {k: {m: 0 for m in names} for k in (*KINDS, "overall")}
    counts: dict[str, int] = dict.fromkeys((*KINDS, "overall"), 0)
    for it in items:
        clean = load_imf1(root / it["clean"])
        noisy = load_imf1(root / it["noisy"])
        kind = it["kind"]
        counts[kind] += 1
        counts["overall"] += 1
        for name, fn in methods:
            v = psnr(clean, fn(noisy))
            for bucket in (kind, "overall"):
                if np.isfinite(v):
                    acc[bucket][name].append(v)
                else:
                    infs[bucket][name] += 1
    means = {
        kind: {m: (float(np.mean(vals)) if (vals := acc[kind][m]) else None) for m in names}
        for kind in acc
        if counts[kind] > 0
    }
    return EvalReport(methods=names, means=means,
                      inf_counts={k: infs[k] for k in means}, n_items=counts)
