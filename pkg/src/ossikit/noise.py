"""Multiplicative artifact fields and supervised dataset assembly.

A clean image I is corrupted as I_N = I * N where the field N comes from
reconstructing simulated bubble-free acquisitions. Reconstructing under
non-ideal conditions (inter-frame intensity drift, smooth illumination
gradients, imperfect phase stepping) reproduces the two artifact families
of interest: |sin|-shaped line residuals from the 2P formula and smooth
illumination nonuniformity from SHT. Fields are normalized to unit mean so
they act as pure modulation, floored at a small positive value, and
augmented by random crops/rescales that vary their apparent spatial
frequency and strength.

Datasets alternate 2P- and SHT-sourced fields item by item, keeping every
shard balanced to within one image.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .bubbles import SceneConfig, compose_scene
from .errors import InvalidInputError
from .forward import MotionSpec, ScenePattern, SubImageSet, acquire_set
from .image import Rect, as_image, crop, load_imf1, normalize, resize_bilinear, save_imf1
from .reconstruct import ReconstructionKind, reconstruct

FIELD_FLOOR = 1e-3


@dataclass(frozen=True)
class ArtifactField:
    """Unit-mean multiplicative residual field N(y, x) and its origin."""

    field: np.ndarray
    source_kind: ReconstructionKind

    def __post_init__(self):
        object.__setattr__(self, "field", as_image(self.field))
        object.__setattr__(self, "source_kind", ReconstructionKind(self.source_kind))
        if self.field.min() <= 0.0:
            raise InvalidInputError("artifact field must be strictly positive")


def extract_artifact_field(sset: SubImageSet, kind: ReconstructionKind | str) -> ArtifactField:
    """Reconstruct a bubble-free set and normalize the result to unit mean."""
    kind = ReconstructionKind(kind)
    recon = reconstruct(sset, kind).astype(np.float64)
    mean = float(recon.mean())
    if not mean > 0.0:
        raise InvalidInputError("reconstruction mean is not positive; cannot form a field")
    fld = np.maximum(recon / mean, FIELD_FLOOR)
    return ArtifactField(fld.astype(np.float32), kind)


@dataclass(frozen=True)
class AugmentConfig:
    """Random crop fraction range and artifact-strength scale range."""

    crop_range: tuple[float, float] = (0.5, 1.0)
    scale_range: tuple[float, float] = (0.5, 1.5)

    def __post_init__(self):
        lo, hi = self.crop_range
        if not 0.0 < lo <= hi <= 1.0:
            raise InvalidInputError(f"bad crop_range {self.crop_range}")
        if self.scale_range[0] > self.scale_range[1] or self.scale_range[0] < 0.0:
            raise InvalidInputError(f"bad scale_range {self.scale_range}")


def augment_field(
    f: ArtifactField,
    rng: np.random.Generator,
    cfg: AugmentConfig = AugmentConfig(),
    target_hw: tuple[int, int] | None = None,
) -> tuple[ArtifactField, dict]:
    """Randomly crop a field and resize to the target dims, mean re-centered.

    Stretching a window of ``crop * field_rows`` rows onto ``target`` rows
    scales the apparent spatial frequency by window/target (build banks
    larger than the dataset images to reach both directions). The strength
    scale s remaps N to 1 + s*(N - mean(N)), so s = 0 erases the artifact
    entirely. Returns the new field and the drawn parameters (for the
    dataset manifest).
    """
    h, w = f.field.shape
    th, tw = target_hw if target_hw is not None else (h, w)
    fh = rng.uniform(*cfg.crop_range)
    fw = rng.uniform(*cfg.crop_range)
    ch = int(np.clip(round(fh * h), 2, h))
    cw = int(np.clip(round(fw * w), 2, w))
    y0 = int(rng.integers(0, h - ch + 1))
    x0 = int(rng.integers(0, w - cw + 1))
    s = float(rng.uniform(*cfg.scale_range))
    resized = resize_bilinear(crop(f.field, Rect(x0, y0, ch, cw)), th, tw).astype(np.float64)
    out = 1.0 + s * (resized - resized.mean())
    out = np.maximum(out, FIELD_FLOOR)
    params = {"crop": [x0, y0, ch, cw], "scale": s}
    return ArtifactField(out.astype(np.float32), f.source_kind), params


def corrupt(clean, f: ArtifactField | np.ndarray) -> np.ndarray:
    """Apply a multiplicative field to a clean image and renormalize to [0, 1]."""
    clean = as_image(clean)
    fld = f.field if isinstance(f, ArtifactField) else as_image(f)
    if clean.shape != fld.shape:
        raise InvalidInputError(f"dim mismatch: clean {clean.shape} vs field {fld.shape}")
    prod = (clean.astype(np.float64) * fld.astype(np.float64)).astype(np.float32)
    return normalize(prod)


def _smooth_field(h: int, w: int, rng: np.random.Generator, base_range, tilt: float, ripple: float) -> np.ndarray:
    y = np.linspace(-0.5, 0.5, h)[:, None]
    x = np.linspace(-0.5, 0.5, w)[None, :]
    base = rng.uniform(*base_range)
    gy = rng.uniform(-tilt, tilt)
    gx = rng.uniform(-tilt, tilt)
    amp = rng.uniform(0.0, ripple)
    fy = rng.uniform(0.5, 1.5)
    fx = rng.uniform(0.5, 1.5)
    ph = rng.uniform(0.0, 2.0 * np.pi)
    f = base * (1.0 + gy * y + gx * x + amp * np.cos(2.0 * np.pi * (fy * y + fx * x) + ph))
    return np.maximum(f, 0.05).astype(np.float32)


def simulate_bubble_free_set(
    height: int,
    width: int,
    kind: ReconstructionKind | str,
    rng: np.random.Generator,
    spatial_freq: float | None = None,
    drift: float | None = None,
    phase_error: float | None = None,
) -> SubImageSet:
    """Two-phase acquisition of a bubble-free scene with non-ideal conditions.

    Stands in for real bubble-free captures: smooth illumination components,
    inter-frame intensity drift (strong for SHT, where it is the dominant
    artifact source) and a small error on the second phase step while the
    set still advertises the nominal (0, pi) phases.
    """
    kind = ReconstructionKind(kind)
    in_focus = _smooth_field(height, width, rng, (0.55, 0.9), tilt=0.4, ripple=0.15)
    defocus = _smooth_field(height, width, rng, (0.2, 0.45), tilt=0.3, ripple=0.1)
    v = float(rng.uniform(0.05, 0.12)) if spatial_freq is None else float(spatial_freq)
    if drift is None:
        drift = float(rng.uniform(0.9, 1.1)) if kind is ReconstructionKind.SHT else float(rng.uniform(0.98, 1.02))
    if phase_error is None:
        phase_error = float(rng.uniform(-0.06, 0.06))
    scene = ScenePattern(in_focus, defocus, v)
    return acquire_set(
        scene,
        (0.0, np.pi),
        motion=MotionSpec(intensity_drift=drift),
        phase_errors=(0.0, phase_error),
    )


def build_field_bank(
    per_kind: int, height: int, width: int, seed: int, **sim_kwargs
) -> list[ArtifactField]:
    """Simulate and extract ``per_kind`` fields for each reconstruction family."""
    if per_kind < 1:
        raise InvalidInputError("need at least one field per kind")
    fields = []
    for ki, kind in enumerate((ReconstructionKind.TWO_PHASE, ReconstructionKind.SHT)):
        for i in range(per_kind):
            rng = np.random.default_rng((seed, ki, i))
            sset = simulate_bubble_free_set(height, width, kind, rng, **sim_kwargs)
            fields.append(extract_artifact_field(sset, kind))
    return fields


def save_field_bank(fields: list[ArtifactField], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i, f in enumerate(fields):
        name = f"field_{i:04d}.imf1"
        save_imf1(f.field, out / name)
        records.append({"id": i, "kind": f.source_kind.value, "path": name})
    (out / "bank.json").write_text(
        json.dumps({"format": "ossikit-fieldbank/1", "fields": records}, indent=2)
    )


def load_field_bank(in_dir) -> list[ArtifactField]:
    src = Path(in_dir)
    doc = json.loads((src / "bank.json").read_text())
    if doc.get("format") != "ossikit-fieldbank/1":
        raise InvalidInputError(f"{src}: not a field bank")
    return [
        ArtifactField(load_imf1(src / rec["path"]), ReconstructionKind(rec["kind"]))
        for rec in doc["fields"]
    ]


@dataclass
class DatasetManifest:
    """Reproducible description of one generated dataset."""

    count: int
    split: float
    seed: int
    height: int
    width: int
    items: list[dict] = dc_field(default_factory=list)
    dry_run: bool = False

    def shard_items(self, shard: str) -> list[dict]:
        return [it for it in self.items if it["shard"] == shard]

    def balance(self) -> dict:
        out: dict[str, dict[str, int]] = {}
        for it in self.items:
            shard = out.setdefault(it["shard"], {"2p": 0, "sht": 0})
            shard[it["kind"]] += 1
        return out

    def validate(self) -> None:
        if len(self.items) != self.count:
            raise InvalidInputError(f"manifest lists {len(self.items)} items for count {self.count}")
        paths = [it["clean"] for it in self.items] + [it["noisy"] for it in self.items]
        if len(set(paths)) != len(paths):
            raise InvalidInputError("manifest paths are not unique")
        n_train = len(self.shard_items("train"))
        if n_train != int(round(self.count * self.split)):
            raise InvalidInputError("train shard size does not match the split fraction")
        for shard, counts in self.balance().items():
            if abs(counts["2p"] - counts["sht"]) > 1:
                raise InvalidInputError(f"{shard} shard unbalanced: {counts}")

    def to_dict(self) -> dict:
        return {"format": "ossikit-dataset/1", **asdict(self)}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        doc = json.loads(Path(path).read_text())
        if doc.pop("format", None) != "ossikit-dataset/1":
            raise InvalidInputError(f"{path}: not a dataset manifest")
        return cls(**doc)


def build_dataset(
    scene_cfg: SceneConfig,
    bank: list[ArtifactField],
    count: int,
    split: float,
    seed: int,
    out_dir=None,
    augment_cfg: AugmentConfig = AugmentConfig(),
    dry_run: bool = False,
) -> DatasetManifest:
    """Generate ``count`` (clean, noisy) training pairs under ``out_dir``.

    Items alternate between 2P- and SHT-sourced fields so both the train
    and test shards stay balanced to within one image. Item i draws all of
    its randomness from ``default_rng((seed, i))``. With ``dry_run`` the
    manifest (paths, shards, kinds, seeds) is produced without rendering a
    single pixel.
    """
    if count < 1:
        raise InvalidInputError("count must be >= 1")
    if not 0.0 <= split <= 1.0:
        raise InvalidInputError(f"split must be in [0, 1], got {split}")
    kinds = (ReconstructionKind.TWO_PHASE, ReconstructionKind.SHT)
    by_kind = {k: [i for i, f in enumerate(bank) if f.source_kind is k] for k in kinds}
    if not dry_run and (not by_kind[kinds[0]] or not by_kind[kinds[1]]):
        raise InvalidInputError("field bank must contain both 2P and SHT fields")

    out = None
    if out_dir is not None and not dry_run:
        out = Path(out_dir)
        for shard in ("train", "test"):
            (out / shard / "clean").mkdir(parents=True, exist_ok=True)
            (out / shard / "noisy").mkdir(parents=True, exist_ok=True)

    n_train = int(round(count * split))
    items = []
    for i in range(count):
        kind = kinds[i % 2]
        shard = "train" if i < n_train else "test"
        name = f"{i:05d}.imf1"
        item = {
            "index": i,
            "shard": shard,
            "kind": kind.value,
            "clean": f"{shard}/clean/{name}",
            "noisy": f"{shard}/noisy/{name}",
            "seed": [seed, i],
            "field_id": None,
            "augment": None,
        }
        if not dry_run:
            rng = np.random.default_rng((seed, i))
            clean, _ = compose_scene(scene_cfg, rng)
            pool = by_kind[kind]
            fid = int(pool[rng.integers(len(pool))])
            fld, params = augment_field(bank[fid], rng, augment_cfg,
                                        target_hw=(scene_cfg.height, scene_cfg.width))
            noisy = corrupt(clean, fld)
            item["field_id"] = fid
            item["augment"] = params
            if out is not None:
                save_imf1(clean, out / item["clean"])
                save_imf1(noisy, out / item["noisy"])
        items.append(item)

    manifest = DatasetManifest(
        count=count,
        split=split,
        seed=seed,
        height=scene_cfg.height,
        width=scene_cfg.width,
        items=items,
        dry_run=dry_run,
    )
    manifest.validate()
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        manifest.save(Path(out_dir) / "manifest.json")
    return manifest
