"""Kernel backend selection.

The hot inner loops (conv gathers/scatters, pooling, 2x upsampling, bubble
rasterization) exist twice: jitted in ``kernels_numba`` and as pure numpy
in ``kernels_numpy``. The numba path is used when numba imports cleanly;
set ``OSSIKIT_NO_NUMBA=1`` to force the numpy fallback. Compare the two
with ``benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import os

_allocator_tuned = False


def tune_allocator() -> None:
    """Keep large buffers on the glibc heap instead of mmap-ing them.

    Training allocates a few ~100 MB scratch arrays per step; by default
    glibc hands those straight back to the OS, so every step pays the page
    faults again. Raising the mmap/trim thresholds lets the heap recycle
    them. No-op on non-glibc platforms.
    """
    global _allocator_tuned
    if _allocator_tuned:
        return
    _allocator_tuned = True
    try:
        import ctypes

        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
        libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
    except (OSError, AttributeError):
        pass


def _numba_disabled() -> bool:
    return os.environ.get("OSSIKIT_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


if _numba_disabled():
    from . import kernels_numpy as kernels

    using_numba = False
else:
    try:
        from . import kernels_numba as kernels  # noqa: F401

        using_numba = True
    except ImportError:
        from . import kernels_numpy as kernels  # noqa: F401

        using_numba = False
