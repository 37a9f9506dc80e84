"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable ``NSWKIT_PURE_PYTHON=1`` forces the pure-Python fallback.
"""
import os

from . import _kernels_py

if os.environ.get("NSWKIT_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:  # extension not built
        kernels = _kernels_py
        BACKEND = "python"

SplitMix64 = _kernels_py.SplitMix64
mix64 = _kernels_py.mix64
MASK64 = _kernels_py.MASK64


def derive_seed(master: int, tag: str, index: int) -> int:
    """Sub-seed from (master seed, component tag, index) by splitmix64 hashing."""
    h = mix64(master & MASK64)
    for ch in tag.encode("utf-8"):
        h = mix64(h ^ ch)
    return mix64((h + (index & MASK64) * 0x9E3779B97F4A7C15) & MASK64)


def derive_seeds(master: int, tag: str, count: int, start: int = 0):
    import numpy as np
    return np.array([derive_seed(master, tag, start + t) for t in range(count)], dtype=np.uint64)
