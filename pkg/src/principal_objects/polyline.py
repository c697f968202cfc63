"""Polygonal-line principal curves with a curvature penalty.

The curve is fitted by alternating three steps: partition the data among
the k+1 vertices and k open segments, move the vertices by gradient descent
on the penalised error with that partition frozen, and split the busiest
segment at its midpoint. Growth stops once the segment count exceeds a
threshold that shrinks as the curve gets closer to the data.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import data_radius
from .errors import InvariantViolation, ParseError, ZeroLengthSegmentError
from .pca import fit_first_component

log = logging.getLogger(__name__)

__all__ = [
    "PolygonalCurve",
    "PolylineParams",
    "PolylinePartition",
    "VertexOptimization",
    "PolylineFit",
    "curvature_penalty",
    "penalized_error",
    "polyline_msd",
    "partition_polyline",
    "optimize_vertices",
    "default_lambda",
    "stopping_threshold",
    "fit_polyline",
    "dumps_curve",
    "loads_curve",
]


@dataclass(frozen=True, eq=False)
class PolygonalCurve:
    """Ordered vertices y^1..y^{k+1}; consecutive vertices must differ."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 2:
            raise InvariantViolation("a polygonal curve needs at least two vertices")
        if np.any(np.all(v[1:] == v[:-1], axis=1)):
            raise ZeroLengthSegmentError("consecutive vertices coincide")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def k(self):
        return self.vertices.shape[0] - 1

    def segment_lengths(self):
        return np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)


@dataclass(frozen=True)
class PolylineParams:
    lam_prime: float = 0.13
    beta: float = 0.3
    max_segments: int = 200
    max_steps: int = 500
    max_halvings: int = 30
    tol: float = 1e-10

    def __post_init__(self):
        if self.lam_prime <= 0 or self.beta <= 0:
            raise InvariantViolation("penalty and stopping factors must be positive")


@dataclass(frozen=True, eq=False)
class PolylinePartition:
    """Entity per row: ``2j`` is vertex j, ``2j + 1`` the open segment (j, j+1)."""

    entity: np.ndarray
    sqdist: np.ndarray
    t: np.ndarray
    k: int

    @property
    def n_sets(self):
        return 2 * self.k + 1

    def counts(self):
        return np.bincount(self.entity, minlength=self.n_sets)

    def segment_counts(self):
        return self.counts()[1::2]


@dataclass(frozen=True, eq=False)
class VertexOptimization:
    curve: PolygonalCurve
    value: float
    n_steps: int
    improved: bool


@dataclass(frozen=True, eq=False)
class PolylineFit:
    curve: PolygonalCurve
    trace: tuple
    initial: PolygonalCurve
    radius: float


def _one_plus_cos(p, q):
    """1 + cos of the angle between the rows of ``p`` and ``q``.

    Near a straight continuation (cos close to -1) the sum is rewritten with
    the Lagrange identity |p|^2 |q|^2 - (p.q)^2 = sum of squared 2x2 minors,
    so exactly collinear vertices give exactly zero.
    """
    p = np.atleast_2d(p)
    q = np.atleast_2d(q)
    norms = np.linalg.norm(p, axis=1) * np.linalg.norm(q, axis=1)
    if np.any(norms == 0):
        raise ZeroLengthSegmentError("zero-length segment at an interior vertex")
    dot = np.einsum("ij,ij->i", p, q)
    outer = p[:, :, None] * q[:, None, :]
    wedge = outer - outer.transpose(0, 2, 1)
    minors = 0.5 * np.einsum("tab,tab->t", wedge, wedge)
    with np.errstate(divide="ignore", invalid="ignore"):
        obtuse = minors / (norms * (norms - dot))
    return np.where(dot < 0, obtuse, 1.0 + dot / norms)


def curvature_penalty(Y, i, r):
    """Curvature penalty of vertex ``i`` (0-based).

    Endpoints pay the squared length of their segment; interior vertices pay
    r^2 (1 + cos g) with g the angle between the two incident segments, so a
    straight continuation costs nothing.
    """
    v = Y.vertices if isinstance(Y, PolygonalCurve) else np.asarray(Y, dtype=float)
    last = v.shape[0] - 1
    if not 0 <= i <= last:
        raise IndexError(f"vertex {i} out of range")
    if i == 0:
        return float(np.sum((v[0] - v[1]) ** 2))
    if i == last:
        return float(np.sum((v[-2] - v[-1]) ** 2))
    return float(r * r * _one_plus_cos(v[i - 1] - v[i], v[i + 1] - v[i])[0])


def _penalty_sum(v, r):
    ends = np.sum((v[0] - v[1]) ** 2) + np.sum((v[-2] - v[-1]) ** 2)
    if v.shape[0] < 3:
        return float(ends)
    p, q = v[:-2] - v[1:-1], v[2:] - v[1:-1]
    return float(ends + r * r * np.sum(_one_plus_cos(p, q)))


def partition_polyline(X, Y):
    """Split the rows among the k+1 vertices and k open segments.

    A row goes to a segment only when its foot point lies strictly inside it
    and it is strictly closer than every vertex.
    """
    v = Y.vertices if isinstance(Y, PolygonalCurve) else np.asarray(Y, dtype=float)
    entity, d2, t = kernels.polyline_partition(X.values, X.gaps, v)
    return PolylinePartition(entity, d2, t, v.shape[0] - 1)


def polyline_msd(X, Y):
    """Root weighted mean squared distance to the whole polyline."""
    part = partition_polyline(X, Y)
    return math.sqrt(float(np.dot(X.weights, part.sqdist)) / X.total_weight)


def penalized_error(X, Y, lam, r=None):
    """MSD to the polyline plus lam / (k+1) times the summed curvature penalties."""
    r = data_radius(X) if r is None else r
    v = Y.vertices
    return polyline_msd(X, Y) + lam / v.shape[0] * _penalty_sum(v, r)


def default_lambda(lam_prime, k, n, msd, r):
    return lam_prime * k / n ** (1.0 / 3.0) * msd / r


def stopping_threshold(beta, n, r, msd):
    if msd == 0:
        return 0.0
    return beta * n ** (1.0 / 3.0) * r / msd


# ---------------------------------------------------- fixed-partition objective


class _FixedObjective:
    """Penalised error with every row tied to its vertex or segment."""

    def __init__(self, X, part, lam, r):
        self.present = X.present.astype(np.float64)
        self.values = X.values
        self.w = X.weights / X.total_weight
        self.lam, self.r = lam, r
        e = part.entity
        self.vert_rows = np.flatnonzero(e % 2 == 0)
        self.vert_idx = e[self.vert_rows] // 2
        self.seg_rows = np.flatnonzero(e % 2 == 1)
        self.seg_idx = e[self.seg_rows] // 2

    def _data(self, v, grad):
        g = np.zeros_like(v) if grad else None
        q = 0.0
        if self.vert_rows.size:
            rows = self.vert_rows
            diff = (self.values[rows] - v[self.vert_idx]) * self.present[rows]
            w = self.w[rows]
            q += float(np.dot(w, np.einsum("ij,ij->i", diff, diff)))
            if grad:
                np.add.at(g, self.vert_idx, -2.0 * w[:, None] * diff)
        if self.seg_rows.size:
            rows, j = self.seg_rows, self.seg_idx
            pres = self.present[rows]
            a, b = v[j], v[j + 1]
            u = (b - a) * pres
            rel = (self.values[rows] - a) * pres
            uu = np.einsum("ij,ij->i", u, u)
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(uu > 0, np.einsum("ij,ij->i", rel, u) / uu, 0.0)
            t = np.clip(t, 0.0, 1.0)
            resid = rel - t[:, None] * u
            w = self.w[rows]
            q += float(np.dot(w, np.einsum("ij,ij->i", resid, resid)))
            if grad:
                # envelope: the optimal foot parameter is held fixed
                np.add.at(g, j, -2.0 * (w * (1.0 - t))[:, None] * resid)
                np.add.at(g, j + 1, -2.0 * (w * t)[:, None] * resid)
        return q, g

    def value(self, v):
        q, _ = self._data(v, False)
        try:
            pen = _penalty_sum(v, self.r)
        except ZeroLengthSegmentError:
            return math.inf
        return math.sqrt(q) + self.lam / v.shape[0] * pen

    def gradient(self, v):
        q, g = self._data(v, True)
        root = math.sqrt(q)
        g = g / (2.0 * root) if root > 0 else np.zeros_like(v)
        return g + self.lam / v.shape[0] * _penalty_gradient(v, self.r)


def _penalty_gradient(v, r):
    g = np.zeros_like(v)
    d = v[0] - v[1]
    g[0] += 2 * d
    g[1] -= 2 * d
    d = v[-2] - v[-1]
    g[-2] += 2 * d
    g[-1] -= 2 * d
    if v.shape[0] < 3:
        return g
    p, q = v[:-2] - v[1:-1], v[2:] - v[1:-1]
    np_ = np.linalg.norm(p, axis=1)[:, None]
    nq = np.linalg.norm(q, axis=1)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.einsum("ij,ij->i", p, q)[:, None] / (np_ * nq)
        dp = r * r * (q / (np_ * nq) - cos * p / np_ ** 2)
        dq = r * r * (p / (np_ * nq) - cos * q / nq ** 2)
    dp = np.nan_to_num(dp, nan=0.0, posinf=0.0, neginf=0.0)
    dq = np.nan_to_num(dq, nan=0.0, posinf=0.0, neginf=0.0)
    g[:-2] += dp
    g[2:] += dq
    g[1:-1] -= dp + dq
    return g


def optimize_vertices(X, Y, lam, params=None, r=None):
    """Steepest descent with halving line search on the frozen-partition error.

    The partition is taken from ``Y``. The fresh-partition penalised error of
    the result never exceeds that of ``Y``: re-partitioning only lowers each
    row's distance.
    """
    params = params or PolylineParams()
    r = data_radius(X) if r is None else r
    obj = _FixedObjective(X, partition_polyline(X, Y), lam, r)
    v = np.array(Y.vertices)
    f = obj.value(v)
    step = 1.0
    improved = False
    n = 0
    for n in range(1, params.max_steps + 1):
        g = obj.gradient(v)
        gg = float(np.sum(g * g))
        if gg == 0:
            break
        step *= 2.0
        for _ in range(params.max_halvings):
            cand = v - step * g
            fc = obj.value(cand)
            if fc <= f - 1e-4 * step * gg:
                break
            step *= 0.5
        else:
            log.debug("line search failed after %d halvings", params.max_halvings)
            break
        decrease = f - fc
        v, f = cand, fc
        improved = True
        if decrease <= params.tol * max(1.0, abs(f)):
            break
    if not improved:
        return VertexOptimization(Y, penalized_error(X, Y, lam, r), n, False)
    out = PolygonalCurve(v)
    return VertexOptimization(out, penalized_error(X, out, lam, r), n, True)


def _initial_segment(X, rng):
    pc = fit_first_component(X, rng=rng, check_degeneracy=False)
    lo, hi = pc.scores.min(), pc.scores.max()
    if hi == lo:
        raise InvariantViolation("data have no spread along the first principal component")
    return PolygonalCurve(np.array([pc.origin + lo * pc.direction, pc.origin + hi * pc.direction]))


def _insert_midpoint(Y, part):
    counts = part.segment_counts()
    lengths = Y.segment_lengths()
    best = max(range(Y.k), key=lambda j: (counts[j], lengths[j], -j))
    v = Y.vertices
    mid = 0.5 * (v[best] + v[best + 1])
    return PolygonalCurve(np.insert(v, best + 1, mid, axis=0)), best


def fit_polyline(X, params=None, rng=None):
    """Fit a polygonal-line principal curve.

    Each round recomputes lam from the current segment count and MSD, then
    optimises the vertices. The trace holds one dict per round.
    """
    params = params or PolylineParams()
    if X.n < 2:
        raise InvariantViolation("at least two observations are required")
    r = data_radius(X)
    Y = _initial_segment(X, rng)
    initial = Y
    trace = []
    while True:
        msd = polyline_msd(X, Y)
        lam = default_lambda(params.lam_prime, Y.k, X.n, msd, r)
        if msd > 0:
            res = optimize_vertices(X, Y, lam, params, r)
            Y = res.curve
            msd = polyline_msd(X, Y)
            value = res.value
        else:
            value = penalized_error(X, Y, lam, r)
        threshold = stopping_threshold(params.beta, X.n, r, msd)
        trace.append({"k": Y.k, "lambda": lam, "msd": msd, "penalized": value,
                      "threshold": threshold})
        if msd == 0 or Y.k > threshold or Y.k >= params.max_segments:
            break
        Y, where = _insert_midpoint(Y, partition_polyline(X, Y))
        log.debug("inserted a vertex in segment %d", where)
    return PolylineFit(Y, tuple(trace), initial, r)


_CURVE_MAGIC = "polygonal-curve 1"


def dumps_curve(Y):
    v = Y.vertices
    lines = [_CURVE_MAGIC, f"vertices {v.shape[0]} {v.shape[1]}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in v]
    return "\n".join(lines) + "\n"


def loads_curve(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != _CURVE_MAGIC:
        raise ParseError("not a polygonal curve file", row=0)
    try:
        n, m = (int(x) for x in lines[1].split()[1:3])
        rows = [[float(x) for x in ln.split()] for ln in lines[2:2 + n]]
    except (IndexError, ValueError):
        raise ParseError("malformed polygonal curve file") from None
    v = np.array(rows)
    if v.shape != (n, m):
        raise ParseError(f"expected {n} vertices of dimension {m}")
    return PolygonalCurve(v)
