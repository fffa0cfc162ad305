"""Kernel backend selection.

The compiled Cython extension is used when it imports; otherwise the numpy
fallback is used.  Set ``HANDOVER_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("HANDOVER_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def fps(pts, k):
    return _impl.fps(_f64(pts), int(k))


def ball_group(pts, centers, radius, max_group):
    return _impl.ball_group(_f64(pts), np.ascontiguousarray(centers, dtype=np.int64), float(radius), int(max_group))


def raycast(origin, dirs, caps, boxes):
    return _impl.raycast(_f64(origin), _f64(dirs).reshape(-1, 3), _f64(caps).reshape(-1, 7), _f64(boxes).reshape(-1, 15))


def segment_box_distance(centers, rot, half, seg_a, seg_b):
    return _impl.segment_box_distance(
        _f64(centers).reshape(-1, 3), _f64(rot), _f64(half), _f64(seg_a).reshape(-1, 3), _f64(seg_b).reshape(-1, 3)
    )


def backend_modules():
    """All importable backends, keyed by name (for benchmarks and parity tests)."""
    mods = {"python": _pykernels}
    try:
        from . import _ckernels

        mods["cython"] = _ckernels
    except ImportError:
        pass
    return mods
