"""Dispatch for the hot loops: compiled extension if importable, numpy otherwise.

Set ``PRINCIPAL_OBJECTS_PURE_PYTHON=1`` before import to force the fallback.

All kernels take the dense ``values`` array with gapped cells zeroed and a
boolean ``gaps`` mask of the same shape.
"""

import os

import numpy as np

from . import _pykernels

_FORCE_PURE = os.environ.get("PRINCIPAL_OBJECTS_PURE_PYTHON", "") not in ("", "0")

_impl = _pykernels
BACKEND = "python"
if not _FORCE_PURE:
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass


def _prep(values, gaps):
    values = np.ascontiguousarray(values, dtype=np.float64)
    gaps = np.ascontiguousarray(gaps, dtype=np.uint8)
    return values, gaps


def nearest_point(values, gaps, points, impl=None):
    """Index of, and squared gapped distance to, the nearest of ``points``.

    Ties go to the lowest point index.
    """
    values, gaps = _prep(values, gaps)
    points = np.ascontiguousarray(points, dtype=np.float64)
    return (impl or _impl).nearest_point(values, gaps, points)


def polyline_partition(values, gaps, vertices, impl=None):
    """Nearest entity of an open polyline for each row.

    Returns ``(entity, sqdist, t)``; entity ``2*j`` is vertex ``j`` and
    ``2*j + 1`` the open segment between vertices ``j`` and ``j + 1``, with
    ``t`` the foot parameter on that segment (0 for vertices). A segment wins
    only when strictly closer than every vertex.
    """
    values, gaps = _prep(values, gaps)
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    return (impl or _impl).polyline_partition(values, gaps, vertices)


def cluster_sums(values, gaps, weights, assignment, k, impl=None):
    """Per-cluster, per-coordinate weighted sums and present-cell weight mass."""
    values, gaps = _prep(values, gaps)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    assignment = np.ascontiguousarray(assignment, dtype=np.int64)
    return (impl or _impl).cluster_sums(values, gaps, weights, assignment, int(k))
