"""Elastic nets, the softening fit, and piecewise-linear elastic maps.

An elastic net is a grid-shaped elastic graph whose only stars are ribs
(2-stars), one per interior vertex and grid direction. Fitting starts from
the linear principal manifold and runs the embedding optimiser through a
sequence of epochs with decreasing moduli multipliers. The fitted net
becomes a continuous map by linear interpolation over a triangulation of
the grid cells.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import _as_gapped
from .elastic_graph import ElasticGraph, Star, dumps_graph, loads_graph, optimize_embedding
from .errors import DimensionMismatchError, InvariantViolation, ParseError
from .pca import fit_components, project_to_basis

__all__ = [
    "ElasticNet",
    "SofteningSchedule",
    "ElasticMapModel",
    "MapProjection",
    "make_elastic_net",
    "moduli_for_resolution",
    "fit_elastic_map",
    "project_to_map",
    "project_dataset",
    "net_simplices",
    "check_grid_regularity",
    "dumps_map_model",
    "loads_map_model",
]

TOPOLOGIES = ("segment", "rectangle", "sphere")


@dataclass(frozen=True, eq=False)
class ElasticNet:
    """Grid graph with unit moduli weights and integer internal coordinates."""

    graph: ElasticGraph
    coords: np.ndarray
    topology: str
    shape: tuple

    @property
    def dim(self):
        return self.coords.shape[1]

    @property
    def n_ribs(self):
        return len(self.graph.stars)


@dataclass(frozen=True)
class SofteningSchedule:
    multipliers: tuple = (1e3, 1e2, 10.0, 1.0)
    lam: float = 0.01
    mu: float = 0.1

    def __post_init__(self):
        m = tuple(float(x) for x in self.multipliers)
        if not m or m[-1] != 1.0:
            raise InvariantViolation("the last softening multiplier must be exactly 1")
        if any(a <= b for a, b in zip(m, m[1:])):
            raise InvariantViolation("softening multipliers must strictly decrease")
        object.__setattr__(self, "multipliers", m)


@dataclass(frozen=True, eq=False)
class ElasticMapModel:
    net: ElasticNet
    embedding: np.ndarray
    epoch_traces: tuple = ()
    lam: float = None
    mu: float = None

    def energy_trace(self):
        return [e for tr in self.epoch_traces for e in tr]


@dataclass(frozen=True, eq=False)
class MapProjection:
    internal: np.ndarray
    ambient: np.ndarray
    distance: float
    simplex: int = field(default=-1)


def _grid_net(shape):
    shape = tuple(int(s) for s in shape)
    coords = np.array(list(np.ndindex(*shape)), dtype=np.int64)
    index = {tuple(c): i for i, c in enumerate(coords.tolist())}
    edges, stars = [], []
    for i, c in enumerate(coords.tolist()):
        for a in range(len(shape)):
            up = list(c)
            up[a] += 1
            if up[a] < shape[a]:
                edges.append((i, index[tuple(up)]))
            if 0 < c[a] < shape[a] - 1:
                down = list(c)
                down[a] -= 1
                stars.append(Star(i, (index[tuple(down)], index[tuple(up)]), 1.0))
    return coords, edges, stars


def _sphere_positions(n_lat, n_lon):
    pts = [(0.0, 0.0, 1.0)]
    for r in range(n_lat):
        theta = math.pi * (r + 1) / (n_lat + 1)
        for k in range(n_lon):
            phi = 2 * math.pi * k / n_lon
            pts.append((math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi),
                        math.cos(theta)))
    pts.append((0.0, 0.0, -1.0))
    return np.array(pts)


def _sphere_net(n_lat, n_lon):
    if n_lat < 1 or n_lon < 3:
        raise InvariantViolation("a sphere net needs at least 1 ring of 3 vertices")
    north, south = 0, 1 + n_lat * n_lon

    def ring(r, k):
        return 1 + r * n_lon + (k % n_lon)

    coords = [(0, 0)] + [(r + 1, k) for r in range(n_lat) for k in range(n_lon)]
    coords.append((n_lat + 1, 0))
    edges, stars = [], []
    for r in range(n_lat):
        for k in range(n_lon):
            edges.append((ring(r, k), ring(r, k + 1)))
            stars.append(Star(ring(r, k), (ring(r, k - 1), ring(r, k + 1)), 1.0))
            up = north if r == 0 else ring(r - 1, k)
            down = south if r == n_lat - 1 else ring(r + 1, k)
            edges.append((up, ring(r, k)))
            stars.append(Star(ring(r, k), (up, down), 1.0))
    for k in range(n_lon):
        edges.append((ring(n_lat - 1, k), south))
    if n_lon % 2 == 0:
        for k in range(n_lon // 2):
            stars.append(Star(north, (ring(0, k), ring(0, k + n_lon // 2)), 1.0))
            stars.append(Star(south, (ring(n_lat - 1, k), ring(n_lat - 1, k + n_lon // 2)), 1.0))
    # shorter edges get larger moduli so that the closed grid is not distorted
    pos = _sphere_positions(n_lat, n_lon)
    e = np.array(edges)
    lengths = np.linalg.norm(pos[e[:, 0]] - pos[e[:, 1]], axis=1)
    lam = lengths.mean() / lengths
    return np.array(coords, dtype=np.int64), edges, lam, stars


def make_elastic_net(dim, shape, topology=None):
    """Regular elastic net of internal dimension ``dim`` with ``shape`` vertices per axis.

    ``topology`` defaults to ``segment`` for dim 1 and ``rectangle`` otherwise;
    ``sphere`` builds a closed latitude/longitude grid with ``shape = (rings,
    per_ring)`` plus two pole vertices.
    """
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    if topology is None:
        topology = "segment" if dim == 1 else "rectangle"
    if topology not in TOPOLOGIES:
        raise InvariantViolation(f"unknown topology {topology!r}")
    if topology == "sphere":
        if dim != 2 or len(shape) != 2:
            raise InvariantViolation("a sphere net has dim 2 and shape (rings, per_ring)")
        coords, edges, lam, stars = _sphere_net(*shape)
        graph = ElasticGraph(len(coords), edges, lam, tuple(stars))
        return ElasticNet(graph, coords, topology, shape)
    if dim not in (1, 2, 3):
        raise InvariantViolation("net dimension must be 1, 2 or 3")
    if len(shape) != dim:
        raise InvariantViolation(f"shape {shape} does not have {dim} axes")
    if (topology == "segment") != (dim == 1):
        raise InvariantViolation(f"topology {topology} does not fit dim {dim}")
    if any(s < 2 for s in shape):
        raise InvariantViolation(f"every axis needs at least 2 vertices, got {shape}")
    coords, edges, stars = _grid_net(shape)
    graph = ElasticGraph(len(coords), edges, 1.0, tuple(stars))
    return ElasticNet(graph, coords, topology, shape)


def check_grid_regularity(net):
    """Graph neighbours differ by one unit in exactly one internal coordinate."""
    for u, v in net.graph.edges.tolist():
        diff = np.abs(net.coords[u] - net.coords[v])
        if diff.sum() != 1:
            return False
    return True


def moduli_for_resolution(lam0, mu0, dim, edge_count, rib_count):
    """Moduli scaled with net resolution: lam0 * s^((2-d)/d), mu0 * r^((2-d)/d)."""
    if edge_count < 1 or rib_count < 1:
        raise ValueError("edge and rib counts must be positive")
    expo = (2.0 - dim) / dim
    return lam0 * edge_count ** expo, mu0 * rib_count ** expo


def initial_embedding(X, net, rng=None):
    """Net spread over the data's range on the leading principal axes."""
    if net.topology == "sphere":
        k = min(3, X.m, X.n - 1)
        basis = fit_components(X, k, rng=rng)
        beta = project_to_basis(X, basis)
        lo, hi = beta.min(axis=0), beta.max(axis=0)
        unit = _sphere_positions(*net.shape)[:, :basis.k]
        local = 0.5 * (lo + hi) + 0.5 * (hi - lo) * unit
        return basis.origin + local @ basis.components
    d = net.dim
    if X.m < d:
        raise DimensionMismatchError(f"data dimension {X.m} is below net dimension {d}")
    basis = fit_components(X, min(d, X.n - 1), rng=rng)
    beta = project_to_basis(X, basis)
    lo, hi = beta.min(axis=0), beta.max(axis=0)
    shape = np.array(net.shape[:basis.k], dtype=float)
    frac = net.coords[:, :basis.k] / (shape - 1)
    local = lo + frac * (hi - lo)
    return basis.origin + local @ basis.components


def fit_elastic_map(X, net, schedule=None, tol=1e-9, max_iter=100, rng=None,
                    resolution_scaling=False, phi0=None):
    """Fit the net to ``X`` through the softening schedule.

    Epoch ``e`` sets every modulus to ``multiplier_e`` times the base value
    (times the net's per-element weight) and optimises from the previous
    epoch's embedding.
    """
    schedule = schedule or SofteningSchedule()
    lam, mu = schedule.lam, schedule.mu
    if resolution_scaling:
        lam, mu = moduli_for_resolution(lam, mu, net.dim, net.graph.n_edges, max(net.n_ribs, 1))
    phi = initial_embedding(X, net, rng) if phi0 is None else np.array(phi0, dtype=float)
    traces = []
    for mult in schedule.multipliers:
        G = net.graph.with_moduli(mult * lam, mult * mu)
        res = optimize_embedding(X, G, phi, tol=tol, max_iter=max_iter)
        phi = res.embedding
        traces.append(res.energy_trace)
    return ElasticMapModel(net, phi, tuple(traces), lam, mu)


# ------------------------------------------------------------- projection


def net_simplices(net):
    """Triangulation of the net cells as ``(vertex_index, internal_coords)`` arrays.

    Grid cells are split along the diagonal from their lowest corner (Kuhn
    triangulation); dim 1 cells are the edges themselves.
    """
    if net.topology == "sphere":
        return _sphere_simplices(net)
    shape = net.shape
    d = len(shape)
    index = {tuple(c): i for i, c in enumerate(net.coords.tolist())}
    simp, internal = [], []
    for base in np.ndindex(*[s - 1 for s in shape]):
        for perm in itertools.permutations(range(d)):
            c = list(base)
            verts = [index[tuple(c)]]
            cs = [tuple(c)]
            for a in perm:
                c[a] += 1
                verts.append(index[tuple(c)])
                cs.append(tuple(c))
            simp.append(verts)
            internal.append(cs)
    return np.array(simp, dtype=np.int64), np.array(internal, dtype=float)


def _sphere_simplices(net):
    n_lat, n_lon = net.shape
    north, south = 0, 1 + n_lat * n_lon

    def ring(r, k):
        return 1 + r * n_lon + (k % n_lon)

    simp, internal = [], []
    for k in range(n_lon):
        simp.append([north, ring(0, k), ring(0, k + 1)])
        internal.append([(0, k + 0.5), (1, k), (1, k + 1)])
        simp.append([south, ring(n_lat - 1, k), ring(n_lat - 1, k + 1)])
        internal.append([(n_lat + 1, k + 0.5), (n_lat, k), (n_lat, k + 1)])
        for r in range(n_lat - 1):
            a, b = ring(r, k), ring(r, k + 1)
            c, d = ring(r + 1, k), ring(r + 1, k + 1)
            simp.append([a, b, d])
            internal.append([(r + 1, k), (r + 1, k + 1), (r + 2, k + 1)])
            simp.append([a, c, d])
            internal.append([(r + 1, k), (r + 2, k), (r + 2, k + 1)])
    return np.array(simp, dtype=np.int64), np.array(internal, dtype=float)


def _faces(n_vertices):
    out = []
    for size in range(1, n_vertices + 1):
        out.extend(itertools.combinations(range(n_vertices), size))
    return out


def _project_onto_simplices(x, P):
    """Nearest point of a stack of simplices ``P`` (T, d+1, m) to ``x``.

    Returns (squared distance, simplex index, barycentric weights). Every face
    is tried: the projection onto its affine hull counts only when it falls
    inside the face.
    """
    T, nv, _ = P.shape
    best = (math.inf, -1, None)
    for face in _faces(nv):
        base = P[:, face[0]]
        r = x - base
        if len(face) == 1:
            d2 = np.einsum("ij,ij->i", r, r)
            coef = np.zeros((T, 0))
            ok = np.ones(T, dtype=bool)
        else:
            D = P[:, face[1:]] - base[:, None, :]
            gram = np.einsum("tam,tbm->tab", D, D)
            rhs = np.einsum("tam,tm->ta", D, r)
            coef = np.einsum("tab,tb->ta", np.linalg.pinv(gram), rhs)
            ok = np.all(coef >= -1e-12, axis=1) & (coef.sum(axis=1) <= 1 + 1e-12)
            resid = r - np.einsum("ta,tam->tm", coef, D)
            d2 = np.einsum("ij,ij->i", resid, resid)
        d2 = np.where(ok, d2, np.inf)
        t = int(np.argmin(d2))
        if d2[t] < best[0]:
            w = np.zeros(nv)
            c = np.clip(coef[t], 0.0, None)
            w[list(face[1:])] = c
            w[face[0]] = 1.0 - c.sum()
            best = (float(d2[t]), t, w)
    return best


def project_to_map(x, model, simplices=None):
    """Nearest point of the piecewise-linear map: internal coords, ambient point, distance.

    Missing coordinates of ``x`` are ignored in the distance; the ambient
    foot point is reported in all coordinates.
    """
    x = _as_gapped(x)
    phi = model.embedding
    if len(x) != phi.shape[1]:
        raise DimensionMismatchError(f"point has dimension {len(x)}, map {phi.shape[1]}")
    simp, internal = simplices if simplices is not None else net_simplices(model.net)
    present = x.present
    P = phi[simp][:, :, present]
    d2, t, w = _project_onto_simplices(x.values[present], P)
    ambient = w @ phi[simp[t]]
    return MapProjection(w @ internal[t], ambient, math.sqrt(max(d2, 0.0)), t)


def project_dataset(X, model):
    """Project every row; returns (internal coords, ambient points, distances)."""
    simplices = net_simplices(model.net)
    res = [project_to_map(X.row(i), model, simplices) for i in range(X.n)]
    return (np.array([r.internal for r in res]), np.array([r.ambient for r in res]),
            np.array([r.distance for r in res]))


# ---------------------------------------------------------- serialisation

_MAP_MAGIC = "elastic-map 1"


def dumps_map_model(model):
    net = model.net
    lines = [_MAP_MAGIC, f"topology {net.topology}",
             "shape " + " ".join(map(str, net.shape)),
             f"dim {net.dim}", f"moduli {model.lam!r} {model.mu!r}",
             f"vertices {net.graph.n_vertices} {model.embedding.shape[1]}"]
    for c, p in zip(net.coords.tolist(), model.embedding.tolist()):
        lines.append(" ".join(map(str, c)) + " | " + " ".join(repr(float(v)) for v in p))
    lines.append("graph")
    return "\n".join(lines) + "\n" + dumps_graph(net.graph)


def loads_map_model(text):
    head, sep, graph_text = text.partition("\ngraph\n")
    if not sep:
        raise ParseError("elastic map file lacks a graph section")
    lines = head.splitlines()
    if not lines or lines[0].strip() != _MAP_MAGIC:
        raise ParseError("not an elastic map file", row=0)
    try:
        topology = lines[1].split()[1]
        shape = tuple(int(s) for s in lines[2].split()[1:])
        lam, mu = (float(v) for v in lines[4].split()[1:3])
        n, m = (int(v) for v in lines[5].split()[1:3])
        coords, pos = [], []
        for ln in lines[6:6 + n]:
            c, p = ln.split("|")
            coords.append([int(v) for v in c.split()])
            pos.append([float(v) for v in p.split()])
    except (IndexError, ValueError):
        raise ParseError("malformed elastic map header") from None
    graph = loads_graph(graph_text)
    net = ElasticNet(graph, np.array(coords, dtype=np.int64), topology, shape)
    return ElasticMapModel(net, np.array(pos).reshape(n, m), (), lam, mu)
