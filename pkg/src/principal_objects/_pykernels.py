"""Pure numpy implementations of the hot loops.

Used when the compiled extension is unavailable or when
``PRINCIPAL_OBJECTS_PURE_PYTHON`` is set. Results agree with the compiled
versions up to floating-point summation order.
"""

import numpy as np

# caps the temporary (chunk, k, m) array at roughly 32 MB
_CHUNK_ELEMENTS = 4_000_000


def _chunks(n, per_row):
    step = max(1, _CHUNK_ELEMENTS // max(per_row, 1))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def nearest_point(values, gaps, points):
    n, m = values.shape
    k = points.shape[0]
    present = ~gaps.astype(bool)
    index = np.empty(n, dtype=np.int64)
    sqdist = np.empty(n, dtype=np.float64)
    for sl in _chunks(n, k * m):
        diff = values[sl, None, :] - points[None, :, :]
        d2 = np.einsum("ikd,ikd,id->ik", diff, diff, present[sl].astype(np.float64))
        # argmin returns the first minimum, i.e. the lowest index on ties
        arg = np.argmin(d2, axis=1)
        index[sl] = arg
        sqdist[sl] = d2[np.arange(d2.shape[0]), arg]
    return index, sqdist


def polyline_partition(values, gaps, vertices):
    n, m = values.shape
    k = vertices.shape[0]
    mask = (~gaps.astype(bool)).astype(np.float64)
    vidx, vdist = nearest_point(values, gaps, vertices)
    entity = 2 * vidx
    sqdist = vdist.copy()
    param = np.zeros(n, dtype=np.float64)
    if k < 2:
        return entity, sqdist, param
    a = vertices[:-1]
    direction = vertices[1:] - a
    for sl in _chunks(n, (k - 1) * m):
        msk = mask[sl, None, :]
        u = values[sl, None, :] - a[None, :, :]
        uv = np.sum(u * direction[None] * msk, axis=2)
        vv = np.sum(direction[None] * direction[None] * msk, axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(vv > 0.0, uv / vv, -1.0)
        inside = (t > 0.0) & (t < 1.0)
        resid = u - t[:, :, None] * direction[None]
        d2 = np.sum(resid * resid * msk, axis=2)
        d2 = np.where(inside, d2, np.inf)
        seg = np.argmin(d2, axis=1)
        rows = np.arange(d2.shape[0])
        seg_d2 = d2[rows, seg]
        better = seg_d2 < sqdist[sl]
        ent = entity[sl]
        ent[better] = 2 * seg[better] + 1
        entity[sl] = ent
        cur = sqdist[sl]
        cur[better] = seg_d2[better]
        sqdist[sl] = cur
        par = param[sl]
        par[better] = t[rows, seg][better]
        param[sl] = par
    return entity, sqdist, param


def cluster_sums(values, gaps, weights, assignment, k):
    m = values.shape[1]
    wp = (~gaps.astype(bool)) * weights[:, None]
    sums = np.zeros((k, m), dtype=np.float64)
    mass = np.zeros((k, m), dtype=np.float64)
    np.add.at(sums, assignment, wp * values)
    np.add.at(mass, assignment, wp)
    return sums, mass
