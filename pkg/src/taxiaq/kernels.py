"""Kernel selection.

The compiled ``_csnap`` extension is used when it imports; otherwise the
numpy implementation in ``_pysnap`` takes over. ``TAXIAQ_KERNEL=python``
forces the fallback.
"""

from __future__ import annotations

import os

from . import _pysnap

_BACKENDS = {"python": _pysnap.snap_points}

try:
    from . import _csnap
except ImportError:  # extension not built
    _csnap = None
else:
    _BACKENDS["cython"] = _csnap.snap_points

AVAILABLE = tuple(sorted(_BACKENDS))

if os.environ.get("TAXIAQ_KERNEL", "").lower() == "python" or _csnap is None:
    BACKEND = "python"
else:
    BACKEND = "cython"


def get_snap_kernel(name: str | None = None):
    name = name or BACKEND
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel {name!r} not available (have {AVAILABLE})") from None
