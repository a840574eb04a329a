"""Hot kernels, compiled when available.

The backend is picked once at import. ``LAYOUTSTEER_KERNELS`` overrides it:
``python`` forces the NumPy fallback, ``cython`` makes a missing extension an
ImportError instead of a silent fallback.
"""
from __future__ import annotations

import os

from . import _pure

_choice = os.environ.get("LAYOUTSTEER_KERNELS", "auto").lower()
if _choice not in ("auto", "python", "cython"):
    raise ImportError(f"LAYOUTSTEER_KERNELS must be auto, python or cython, got {_choice!r}")

if _choice == "python":
    _impl = _pure
    BACKEND = "python"
else:
    try:
        from . import _native as _impl
        BACKEND = "cython"
    except ImportError:
        if _choice == "cython":
            raise
        _impl = _pure
        BACKEND = "python"


def backend(name: str):
    """Return the kernel module for ``name`` (``python`` or ``cython``)."""
    if name == "python":
        return _pure
    if name == "cython":
        from . import _native

        return _native
    raise ValueError(f"unknown kernel backend {name!r}")


def native_available() -> bool:
    try:
        from . import _native  # noqa: F401
    except ImportError:
        return False
    return True


attention = _impl.attention
denoise_step = _impl.denoise_step
attention_vjp = _impl.attention_vjp
convex_hull = _impl.convex_hull
rasterize_convex = _impl.rasterize_convex
relocate = _impl.relocate
label_components = _impl.label_components

__all__ = [
    "BACKEND",
    "attention",
    "attention_vjp",
    "backend",
    "convex_hull",
    "denoise_step",
    "label_components",
    "native_available",
    "rasterize_convex",
    "relocate",
]
