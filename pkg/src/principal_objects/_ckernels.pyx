# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Same contracts as :mod:`principal_objects._pykernels`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def nearest_point(const double[:, ::1] values, const cnp.uint8_t[:, ::1] gaps,
                  const double[:, ::1] points):
    cdef Py_ssize_t n = values.shape[0], m = values.shape[1], k = points.shape[0]
    cdef Py_ssize_t i, j, d
    cdef double best, acc, diff
    cdef Py_ssize_t arg
    index = np.empty(n, dtype=np.int64)
    sqdist = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] idx_v = index
    cdef double[::1] dist_v = sqdist
    with nogil:
        for i in range(n):
            best = INFINITY
            arg = 0
            for j in range(k):
                acc = 0.0
                for d in range(m):
                    if not gaps[i, d]:
                        diff = values[i, d] - points[j, d]
                        acc = acc + diff * diff
                if acc < best:
                    best = acc
                    arg = j
            idx_v[i] = arg
            dist_v[i] = best
    return index, sqdist


def polyline_partition(const double[:, ::1] values, const cnp.uint8_t[:, ::1] gaps,
                       const double[:, ::1] vertices):
    cdef Py_ssize_t n = values.shape[0], m = values.shape[1], k = vertices.shape[0]
    cdef Py_ssize_t i, j, d
    cdef double best, acc, diff, uv, vv, t, foot
    cdef Py_ssize_t arg
    cdef double best_t
    entity = np.empty(n, dtype=np.int64)
    sqdist = np.empty(n, dtype=np.float64)
    param = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] ent_v = entity
    cdef double[::1] dist_v = sqdist
    cdef double[::1] par_v = param
    with nogil:
        for i in range(n):
            best = INFINITY
            arg = 0
            for j in range(k):
                acc = 0.0
                for d in range(m):
                    if not gaps[i, d]:
                        diff = values[i, d] - vertices[j, d]
                        acc = acc + diff * diff
                if acc < best:
                    best = acc
                    arg = 2 * j
            best_t = 0.0
            # segments must be strictly closer than every vertex
            for j in range(k - 1):
                uv = 0.0
                vv = 0.0
                for d in range(m):
                    if not gaps[i, d]:
                        diff = vertices[j + 1, d] - vertices[j, d]
                        uv = uv + (values[i, d] - vertices[j, d]) * diff
                        vv = vv + diff * diff
                if vv <= 0.0:
                    continue
                t = uv / vv
                if t <= 0.0 or t >= 1.0:
                    continue
                acc = 0.0
                for d in range(m):
                    if not gaps[i, d]:
                        foot = vertices[j, d] + t * (vertices[j + 1, d] - vertices[j, d])
                        diff = values[i, d] - foot
                        acc = acc + diff * diff
                if acc < best:
                    best = acc
                    arg = 2 * j + 1
                    best_t = t
            ent_v[i] = arg
            dist_v[i] = best
            par_v[i] = best_t
    return entity, sqdist, param


def cluster_sums(const double[:, ::1] values, const cnp.uint8_t[:, ::1] gaps,
                 const double[::1] weights, const cnp.int64_t[::1] assignment,
                 Py_ssize_t k):
    cdef Py_ssize_t n = values.shape[0], m = values.shape[1]
    cdef Py_ssize_t i, d, c
    cdef double w
    sums = np.zeros((k, m), dtype=np.float64)
    mass = np.zeros((k, m), dtype=np.float64)
    cdef double[:, ::1] s_v = sums
    cdef double[:, ::1] m_v = mass
    with nogil:
        for i in range(n):
            c = assignment[i]
            w = weights[i]
            for d in range(m):
                if not gaps[i, d]:
                    s_v[c, d] = s_v[c, d] + w * values[i, d]
                    m_v[c, d] = m_v[c, d] + w
    return sums, mass
