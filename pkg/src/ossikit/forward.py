"""Forward model: simulated structured-illumination sub-image acquisition.

A scene is an in-focus component I_F plus a defocused wide-field component
I_D. One acquisition at illumination phase phi produces

    I(y, x) = I_D(y, x) + m * I_F(y, x) * sin(2*pi*v*y + phi)

where v is the pattern's spatial frequency in cycles/pixel along y and m
the modulation depth. Grabbing several phase-shifted frames of the same
(possibly drifting) scene yields a SubImageSet, the input to every
reconstruction algorithm.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError
from .image import as_image, load_imf1, save_imf1, translate

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ScenePattern:
    """Ground truth components plus illumination-pattern parameters."""

    in_focus: np.ndarray
    defocus: np.ndarray
    spatial_freq: float
    modulation_depth: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "in_focus", as_image(self.in_focus))
        object.__setattr__(self, "defocus", as_image(self.defocus))
        if self.in_focus.shape != self.defocus.shape:
            raise InvalidInputError(
                f"component dims differ: {self.in_focus.shape} vs {self.defocus.shape}"
            )
        if not 0.0 < self.spatial_freq < 0.5:
            raise InvalidInputError(f"spatial_freq must be in (0, 0.5), got {self.spatial_freq}")
        if not 0.0 < self.modulation_depth <= 1.0:
            raise InvalidInputError(f"modulation_depth must be in (0, 1], got {self.modulation_depth}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.in_focus.shape


@dataclass(frozen=True)
class MotionSpec:
    """Per-frame scene drift: translation in pixels and intensity gain."""

    dx: float = 0.0
    dy: float = 0.0
    intensity_drift: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.dx) and np.isfinite(self.dy) and np.isfinite(self.intensity_drift)):
            raise InvalidInputError("motion parameters must be finite")
        if self.intensity_drift <= 0.0:
            raise InvalidInputError(f"intensity_drift must be positive, got {self.intensity_drift}")


@dataclass(frozen=True)
class SubImageSet:
    """Ordered phase-shifted acquisitions I_n with their phases (radians)."""

    frames: np.ndarray  # (n_frames, H, W) float32
    phases: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float32)
        if frames.ndim != 3 or frames.shape[0] < 2:
            raise InvalidInputError(f"need >= 2 equal-size frames, got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise InvalidInputError("frames contain NaN or Inf")
        phases = np.mod(np.asarray(self.phases, dtype=np.float64), TWO_PI)
        if phases.shape != (frames.shape[0],):
            raise InvalidInputError(
                f"got {phases.shape[0] if phases.ndim == 1 else '?'} phases for {frames.shape[0]} frames"
            )
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "phases", phases)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape[1:]


def modulate(scene: ScenePattern, phase: float) -> np.ndarray:
    """One acquisition: I_D + m * I_F * sin(2*pi*v*y + phase)."""
    if not np.isfinite(phase):
        raise InvalidInputError("phase must be finite")
    h = scene.shape[0]
    y = np.arange(h, dtype=np.float64)
    carrier = np.sin(TWO_PI * scene.spatial_freq * y + phase)
    out = scene.defocus.astype(np.float64) + (
        scene.modulation_depth * scene.in_focus.astype(np.float64) * carrier[:, None]
    )
    return out.astype(np.float32)


def acquire_set(
    scene: ScenePattern,
    phases,
    motion: MotionSpec | None = None,
    phase_errors=None,
) -> SubImageSet:
    """Acquire one frame per phase, drifting the scene between frames.

    Motion accumulates: frame n sees the scene translated by n*(dx, dy)
    and scaled by intensity_drift**n. ``phase_errors`` optionally perturbs
    the *actual* illumination phase of each frame while the returned set
    still records the nominal phases, emulating imperfect phase stepping.
    """
    phases = list(phases)
    if len(phases) < 2:
        raise InvalidInputError("need at least 2 phases")
    if phase_errors is None:
        phase_errors = [0.0] * len(phases)
    if len(phase_errors) != len(phases):
        raise InvalidInputError("phase_errors length must match phases")
    frames = []
    for n, (phi, err) in enumerate(zip(phases, phase_errors)):
        frame_scene = scene
        if motion is not None and n > 0:
            gain = motion.intensity_drift**n
            in_focus = translate(scene.in_focus, n * motion.dx, n * motion.dy) * np.float32(gain)
            defocus = translate(scene.defocus, n * motion.dx, n * motion.dy) * np.float32(gain)
            frame_scene = ScenePattern(
                in_focus, defocus, scene.spatial_freq, scene.modulation_depth
            )
        frames.append(modulate(frame_scene, phi + err))
    return SubImageSet(np.stack(frames), np.asarray(phases, dtype=np.float64))


def save_set(sset: SubImageSet, out_dir) -> None:
    """Write a sub-image set directory: NNN.imf1 frames plus set.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for n in range(len(sset)):
        name = f"{n:03d}.imf1"
        save_imf1(sset.frames[n], out / name)
        names.append(name)
    meta = {"format": "ossikit-subimages/1", "frames": names, "phases": sset.phases.tolist()}
    (out / "set.json").write_text(json.dumps(meta, indent=2))


def load_set(in_dir) -> SubImageSet:
    src = Path(in_dir)
    meta_path = src / "set.json"
    if not meta_path.is_file():
        raise FormatError(f"{src}: missing set.json")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{meta_path}: invalid JSON") from e
    if meta.get("format") != "ossikit-subimages/1":
        raise FormatError(f"{meta_path}: unknown format {meta.get('format')!r}")
    frames = [load_imf1(src / name) for name in meta["frames"]]
    return SubImageSet(np.stack(frames), np.asarray(meta["phases"], dtype=np.float64))
