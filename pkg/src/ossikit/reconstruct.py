"""Optically sectioned reconstructions from phase-shifted sub-images.

Three algorithms:

* three-phase (phases 0, 2pi/3, 4pi/3):
      I_F = (sqrt(2)/3) * sqrt((I0-I1)^2 + (I0-I2)^2 + (I1-I2)^2)
* two-phase "2P" (phases 0, pi):
      I_F = (sqrt(2)/2) * |I0 - I1|
  fast, but the missing third phase leaves |sin|-shaped line artifacts;
* sequence Hilbert transform "SHT" (two phases): the magnitude of the
  analytic signal of the difference image dI = I1 - I0 along the pattern
  axis y, divided by 2*sin(phi0/2) where phi0 is the phase step. For the
  standard phi0 = pi step the divisor is exactly 2; other steps are an
  extrapolation of the same envelope identity.

All three formulas are absolutely homogeneous of degree 1, so scaling every
frame scales the reconstruction by the same factor.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import InvalidInputError
from .forward import SubImageSet, TWO_PI

PHASE_TOL = 1e-6

_SQRT2 = np.sqrt(2.0)


class ReconstructionKind(str, Enum):
    THREE_PHASE = "3p"
    TWO_PHASE = "2p"
    SHT = "sht"


def _check_phases(sset: SubImageSet, nominal) -> None:
    got = np.sort(sset.phases)
    want = np.sort(np.mod(np.asarray(nominal, dtype=np.float64), TWO_PI))
    if got.shape != want.shape or np.max(np.abs(got - want)) > PHASE_TOL:
        raise InvalidInputError(
            f"phases {sset.phases.tolist()} do not match nominal {list(nominal)} within {PHASE_TOL}"
        )


def reconstruct_3p(sset: SubImageSet) -> np.ndarray:
    """Three-phase reconstruction; exact for ideal acquisitions with m = 1."""
    if len(sset) != 3:
        raise InvalidInputError(f"three-phase reconstruction needs 3 frames, got {len(sset)}")
    _check_phases(sset, (0.0, TWO_PI / 3.0, 2.0 * TWO_PI / 3.0))
    f = sset.frames.astype(np.float64)
    d01 = f[0] - f[1]
    d02 = f[0] - f[2]
    d12 = f[1] - f[2]
    out = (_SQRT2 / 3.0) * np.sqrt(d01 * d01 + d02 * d02 + d12 * d12)
    return out.astype(np.float32)


def reconstruct_2p(sset: SubImageSet) -> np.ndarray:
    """Two-phase reconstruction; leaves the |sin| line-artifact pattern."""
    if len(sset) != 2:
        raise InvalidInputError(f"two-phase reconstruction needs 2 frames, got {len(sset)}")
    _check_phases(sset, (0.0, np.pi))
    f = sset.frames.astype(np.float64)
    out = (_SQRT2 / 2.0) * np.abs(f[0] - f[1])
    return out.astype(np.float32)


def hilbert_y(img) -> np.ndarray:
    """Discrete Hilbert transform of every column (along y).

    FFT-based: the negative-frequency half is zeroed, the positive half
    doubled, DC and (for even height) Nyquist kept; the imaginary part of
    the inverse transform is returned. Sign convention: HT(cos) = sin.
    Dtype of the input is preserved.
    """
    x = np.asarray(img)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InvalidInputError(f"need a 2-D image with height >= 2, got shape {x.shape}")
    h = x.shape[0]
    spec = np.fft.fft(x.astype(np.float64), axis=0)
    mask = np.zeros(h)
    mask[0] = 1.0
    mask[1 : (h + 1) // 2] = 2.0
    if h % 2 == 0:
        mask[h // 2] = 1.0
    analytic = np.fft.ifft(spec * mask[:, None], axis=0)
    return analytic.imag.astype(x.dtype)


def reconstruct_sht(sset: SubImageSet, mirror_pad: int = 0) -> np.ndarray:
    """Sequence-Hilbert-transform reconstruction from two frames.

    Columns are transformed as-is (implicit periodic extension); pass
    ``mirror_pad`` > 0 (usually one pattern period, round(1/v) rows) to
    mirror-extend each column before the transform, which reduces edge
    ringing on non-periodic content.
    """
    if len(sset) != 2:
        raise InvalidInputError(f"SHT reconstruction needs 2 frames, got {len(sset)}")
    step = float(np.mod(sset.phases[1] - sset.phases[0], TWO_PI))
    divisor = 2.0 * np.sin(0.5 * step)
    if abs(divisor) < 1e-6:
        raise InvalidInputError(f"phase step {step} gives a vanishing divisor")
    f = sset.frames.astype(np.float64)
    diff = f[1] - f[0]
    if mirror_pad < 0:
        raise InvalidInputError("mirror_pad must be >= 0")
    if mirror_pad > 0:
        pad = min(mirror_pad, diff.shape[0] - 1)
        padded = np.pad(diff, ((pad, pad), (0, 0)), mode="reflect")
        quad = hilbert_y(padded)[pad : pad + diff.shape[0]]
    else:
        quad = hilbert_y(diff)
    out = np.hypot(diff, quad) / divisor
    return out.astype(np.float32)


def reconstruct(sset: SubImageSet, kind: ReconstructionKind | str, **kwargs) -> np.ndarray:
    """Dispatch to the reconstruction algorithm named by ``kind``."""
    kind = ReconstructionKind(kind)
    if kind is ReconstructionKind.THREE_PHASE:
        return reconstruct_3p(sset, **kwargs)
    if kind is ReconstructionKind.TWO_PHASE:
        return reconstruct_2p(sset, **kwargs)
    return reconstruct_sht(sset, **kwargs)
