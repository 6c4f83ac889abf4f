"""Kernel backend selection.

The compiled module is used when it imports; setting ``RBSDE_PURE_PYTHON=1``
forces the numpy fallback. ``BACKEND`` names the active choice.
"""
from __future__ import annotations

import os

from rbsde_horizon import _pykernels

if os.environ.get("RBSDE_PURE_PYTHON") == "1":
    _impl = _pykernels
else:
    try:
        from rbsde_horizon import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "compiled" if _impl is not _pykernels else "python"

halve = _impl.halve
halve_rows = _impl.halve_rows
snell_backward = _impl.snell_backward


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value wins, then RBSDE_THREADS, then 1."""
    if threads is None:
        threads = int(os.environ.get("RBSDE_THREADS", "1") or 1)
    return max(1, int(threads))
