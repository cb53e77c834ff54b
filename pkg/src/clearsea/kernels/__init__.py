"""Hot-loop array kernels with selectable backend.

Two interchangeable implementations exist: numba-compiled loops and
pure numpy.  The active one is chosen once at import from the
``CLEARSEA_KERNELS`` environment variable (``numba`` or ``numpy``);
default is numba when it imports cleanly, numpy otherwise.  Tests and
the benchmark switch at runtime through :func:`set_backend`.
"""
from __future__ import annotations

import os

from . import numpy_ops

try:
    from . import numba_ops

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba_ops = None
    HAS_NUMBA = False

_BACKENDS = {"numpy": numpy_ops}
if HAS_NUMBA:
    _BACKENDS["numba"] = numba_ops

_active_name = ""


def set_backend(name: str) -> None:
    """Select the kernel implementation by name (``numba`` or ``numpy``)."""
    global _active_name, im2col, col2im, box_sum_valid
    if name not in _BACKENDS:
        known = ", ".join(sorted(_BACKENDS))
        raise ValueError(f"unknown kernel backend {name!r} (have: {known})")
    mod = _BACKENDS[name]
    _active_name = name
    im2col = mod.im2col
    col2im = mod.col2im
    box_sum_valid = mod.box_sum_valid


def get_backend() -> str:
    """Name of the currently active backend."""
    return _active_name


_default = os.environ.get("CLEARSEA_KERNELS", "").strip().lower()
if not _default:
    _default = "numba" if HAS_NUMBA else "numpy"
set_backend(_default)
