"""Elastic graphs, their energy, and the embedding optimiser.

An elastic graph carries a stretching modulus on every edge and a bending
modulus on every selected k-star. For an embedding ``phi`` (one row per
vertex) the elastic energy is

    U_E = sum_edges  lam * |phi(u) - phi(v)|^2
    U_R = sum_stars  mu  * |phi(center) - mean(phi(leaves))|^2

and the optimised functional adds the weighted mean squared distance from
the data to the nearest vertex. The optimiser alternates the nearest-vertex
partition with one exact linear solve of

    (diag(n_j / W) + e + s) Y = (cluster sums) / W

so every half-step is an exact minimisation and the functional never
increases.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels
from .dataset import Partition, nearest
from .errors import DimensionMismatchError, InvariantViolation, ParseError, SingularSystemError

log = logging.getLogger(__name__)

__all__ = [
    "Star",
    "ElasticGraph",
    "EnergyBreakdown",
    "ElasticMatrices",
    "OptimizationResult",
    "elastic_energy",
    "total_functional",
    "fixed_partition_functional",
    "partition_by_vertices",
    "build_elastic_matrices",
    "solve_embedding_step",
    "optimize_embedding",
    "is_pluriharmonic",
    "corner_points",
    "dumps_graph",
    "loads_graph",
]


class Star(NamedTuple):
    center: int
    leaves: tuple
    modulus: float

    @property
    def k(self):
        return len(self.leaves)


@dataclass(frozen=True, eq=False)
class ElasticGraph:
    n_vertices: int
    edges: np.ndarray
    edge_moduli: np.ndarray
    stars: tuple = ()
    primitive: bool = False
    _adjacency: tuple = field(init=False, repr=False)

    def __post_init__(self):
        n = int(self.n_vertices)
        edges = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        edges = np.sort(edges, axis=1)
        lam = np.broadcast_to(np.asarray(self.edge_moduli, dtype=np.float64),
                              (edges.shape[0],)).copy()
        if n < 1:
            raise InvariantViolation("a graph needs at least one vertex")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise InvariantViolation("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise InvariantViolation("self-loops are not allowed")
        if len({tuple(e) for e in edges.tolist()}) != edges.shape[0]:
            raise InvariantViolation("duplicate edge")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise InvariantViolation("edge moduli must be finite and non-negative")
        adj = [[] for _ in range(n)]
        for u, v in edges.tolist():
            adj[u].append(v)
            adj[v].append(u)
        adjacency = tuple(tuple(sorted(a)) for a in adj)
        stars = tuple(Star(int(s[0]), tuple(int(x) for x in s[1]), float(s[2]))
                      for s in self.stars)
        for st in stars:
            if st.k < 2:
                raise InvariantViolation(f"star at {st.center} has fewer than two leaves")
            if len(set(st.leaves)) != st.k:
                raise InvariantViolation(f"star at {st.center} repeats a leaf")
            if not set(st.leaves) <= set(adjacency[st.center]):
                raise InvariantViolation(f"star at {st.center} uses a non-neighbour leaf")
            if st.modulus < 0 or not math.isfinite(st.modulus):
                raise InvariantViolation("star moduli must be finite and non-negative")
        if self.primitive:
            centers = [st.center for st in stars]
            expected = [v for v in range(n) if len(adjacency[v]) >= 2]
            if sorted(centers) != expected:
                raise InvariantViolation("primitive graph needs exactly one star per non-terminal vertex")
            for st in stars:
                if set(st.leaves) != set(adjacency[st.center]):
                    raise InvariantViolation(f"primitive star at {st.center} must use all neighbours")
        edges.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "n_vertices", n)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "edge_moduli", lam)
        object.__setattr__(self, "stars", stars)
        object.__setattr__(self, "primitive", bool(self.primitive))
        object.__setattr__(self, "_adjacency", adjacency)

    @classmethod
    def primitive_from_edges(cls, n_vertices, edges, lam, mu):
        """Primitive graph: one star of all neighbours at every vertex of degree >= 2."""
        probe = cls(n_vertices, edges, lam)
        stars = [Star(v, nb, mu) for v, nb in enumerate(probe.neighbors) if len(nb) >= 2]
        return cls(n_vertices, probe.edges, probe.edge_moduli, tuple(stars), primitive=True)

    @classmethod
    def chain(cls, n_vertices, lam=1.0, mu=1.0):
        edges = [(i, i + 1) for i in range(n_vertices - 1)]
        return cls.primitive_from_edges(n_vertices, edges, lam, mu)

    @property
    def neighbors(self):
        return self._adjacency

    @property
    def degrees(self):
        return np.array([len(a) for a in self._adjacency], dtype=np.int64)

    @property
    def n_edges(self):
        return self.edges.shape[0]

    def star_orders(self):
        """Map k -> number of selected k-stars."""
        out = {}
        for st in self.stars:
            out[st.k] = out.get(st.k, 0) + 1
        return out

    def is_tree(self):
        if self.n_edges != self.n_vertices - 1:
            return False
        n_comp, _ = connected_components(self._coupling(), directed=False)
        return n_comp == 1

    def is_acyclic(self):
        n_comp, _ = connected_components(self._coupling(edges_only=True), directed=False)
        return self.n_edges == self.n_vertices - n_comp

    def _coupling(self, edges_only=False):
        rows = list(self.edges[:, 0])
        cols = list(self.edges[:, 1])
        if not edges_only:
            for st in self.stars:
                rows.extend([st.center] * st.k)
                cols.extend(st.leaves)
        n = self.n_vertices
        return coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))

    def with_moduli(self, lam_scale=1.0, mu_scale=1.0):
        """Copy with every edge modulus times ``lam_scale`` and star modulus times ``mu_scale``."""
        stars = tuple(Star(s.center, s.leaves, s.modulus * mu_scale) for s in self.stars)
        return ElasticGraph(self.n_vertices, self.edges, self.edge_moduli * lam_scale,
                            stars, self.primitive)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Data term ``approx`` (squared, rootless) plus stretching and bending energy."""

    approx: float
    stretching: float
    bending: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.approx + self.stretching + self.bending)

    @property
    def elastic(self):
        return self.stretching + self.bending

    @property
    def msd(self):
        """Root form of the data term."""
        return math.sqrt(max(self.approx, 0.0))

    @property
    def total_root_form(self):
        return self.msd + self.stretching + self.bending

    def as_dict(self):
        return {"approx": self.approx, "stretching": self.stretching,
                "bending": self.bending, "total": self.total, "msd": self.msd}


@dataclass(frozen=True, eq=False)
class ElasticMatrices:
    e: np.ndarray
    s: np.ndarray

    @property
    def combined(self):
        return self.e + self.s


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    embedding: np.ndarray
    energy_trace: tuple
    partition: Partition
    n_iter: int
    converged: bool

    @property
    def energy(self):
        return self.energy_trace[-1]


def _check_embedding(G, phi):
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2 or phi.shape[0] != G.n_vertices:
        raise DimensionMismatchError(
            f"embedding must have {G.n_vertices} rows, got shape {phi.shape}")
    return phi


def elastic_energy(G, phi):
    """Stretching and bending energy from the per-element definitions."""
    phi = _check_embedding(G, phi)
    ue = 0.0
    if G.n_edges:
        diff = phi[G.edges[:, 0]] - phi[G.edges[:, 1]]
        ue = float(np.dot(G.edge_moduli, np.einsum("ij,ij->i", diff, diff)))
    ur = 0.0
    for st in G.stars:
        dev = phi[st.center] - phi[list(st.leaves)].mean(axis=0)
        ur += st.modulus * float(np.dot(dev, dev))
    return EnergyBreakdown(0.0, ue, ur)


def build_elastic_matrices(G):
    """Matrices e and s with U_E = tr(phi^T e phi) and U_R = tr(phi^T s phi)."""
    n = G.n_vertices
    e = np.zeros((n, n))
    if G.n_edges:
        u, v = G.edges[:, 0], G.edges[:, 1]
        lam = G.edge_moduli
        np.add.at(e, (u, u), lam)
        np.add.at(e, (v, v), lam)
        np.add.at(e, (u, v), -lam)
        np.add.at(e, (v, u), -lam)
    s = np.zeros((n, n))
    for st in G.stars:
        idx = np.array((st.center,) + st.leaves)
        vec = np.full(idx.shape[0], -1.0 / st.k)
        vec[0] = 1.0
        s[np.ix_(idx, idx)] += st.modulus * np.outer(vec, vec)
    return ElasticMatrices(e, s)


def partition_by_vertices(X, phi):
    """Nearest embedded vertex for every observation; ties to the lowest index."""
    phi = np.atleast_2d(np.asarray(phi, dtype=np.float64))
    idx, _ = nearest(X, phi)
    return Partition(idx, phi.shape[0])


def _quadratic_energy(M, phi):
    ue = float(np.sum(phi * (M.e @ phi)))
    ur = float(np.sum(phi * (M.s @ phi)))
    return ue, ur


def total_functional(X, G, phi, matrices=None):
    """Data term (squared, against the nearest vertex) plus elastic energy."""
    phi = _check_embedding(G, phi)
    _, d2 = nearest(X, phi)
    approx = float(np.dot(X.weights, d2)) / X.total_weight
    if matrices is None:
        el = elastic_energy(G, phi)
        return EnergyBreakdown(approx, el.stretching, el.bending)
    ue, ur = _quadratic_energy(matrices, phi)
    return EnergyBreakdown(approx, ue, ur)


def fixed_partition_functional(X, G, phi, partition):
    """The functional with the data term measured against assigned (not nearest) vertices."""
    phi = _check_embedding(G, phi)
    assigned = phi[partition.assignment]
    diff = (X.values - assigned) * X.present
    approx = float(np.dot(X.weights, np.einsum("ij,ij->i", diff, diff))) / X.total_weight
    el = elastic_energy(G, phi)
    return EnergyBreakdown(approx, el.stretching, el.bending)


def _unsupported_vertices(G, mass):
    n_comp, labels = connected_components(G._coupling(), directed=False)
    comp_mass = np.bincount(labels, weights=mass, minlength=n_comp)
    bad = np.flatnonzero(comp_mass <= 0)
    return np.flatnonzero(np.isin(labels, bad))


def solve_embedding_step(X, G, partition, matrices=None, ridge=False):
    """Exact minimiser of the functional for a fixed partition.

    With missing cells the data mass on the diagonal differs per coordinate
    and the system is assembled coordinate by coordinate; complete columns
    share one Cholesky factorisation.
    """
    if partition.k != G.n_vertices:
        raise DimensionMismatchError("partition size differs from the vertex count")
    M = matrices if matrices is not None else build_elastic_matrices(G)
    W = X.total_weight
    sums, mass = kernels.cluster_sums(X.values, X.gaps, X.weights, partition.assignment,
                                      G.n_vertices)
    elastic = M.e + M.s
    out = np.empty((G.n_vertices, X.m))
    if X.complete:
        groups = [(mass[:, 0], np.arange(X.m))]
    else:
        groups = {}
        for d in range(X.m):
            groups.setdefault(mass[:, d].tobytes(), (mass[:, d], []))[1].append(d)
        groups = [(col, np.array(ds)) for col, ds in groups.values()]
    for col, dims in groups:
        a = elastic + np.diag(col / W)
        if ridge:
            a[np.diag_indices_from(a)] += 1e-12 * np.trace(a) / G.n_vertices
        elif np.any(col <= 0):
            bad = _unsupported_vertices(G, col)
            if bad.size:
                raise SingularSystemError(
                    f"vertices {bad.tolist()} have no data and no elastic link to data",
                    vertices=bad.tolist())
        try:
            factor = scipy.linalg.cho_factor(a, check_finite=False)
        except np.linalg.LinAlgError:
            raise SingularSystemError("embedding system is not positive definite") from None
        out[:, dims] = scipy.linalg.cho_solve(factor, sums[:, dims] / W, check_finite=False)
    return out


def optimize_embedding(X, G, phi0, tol=1e-9, max_iter=100, ridge=False, matrices=None):
    """Alternate partitioning and exact solves until the partition repeats.

    Also stops when no vertex moves by more than ``tol`` or after
    ``max_iter`` solves. The energy trace starts with the energy of
    ``phi0`` and gains one entry per solve; it is non-increasing.
    """
    phi = _check_embedding(G, phi0).copy()
    if phi.shape[1] != X.m:
        raise DimensionMismatchError(f"embedding dimension {phi.shape[1]} != data dimension {X.m}")
    M = matrices if matrices is not None else build_elastic_matrices(G)
    W = X.total_weight
    idx, d2 = nearest(X, phi)
    ue, ur = _quadratic_energy(M, phi)
    trace = [EnergyBreakdown(float(np.dot(X.weights, d2)) / W, ue, ur)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = solve_embedding_step(X, G, Partition(idx, G.n_vertices), M, ridge)
        new_idx, d2 = nearest(X, new)
        ue, ur = _quadratic_energy(M, new)
        trace.append(EnergyBreakdown(float(np.dot(X.weights, d2)) / W, ue, ur))
        shift = float(np.max(np.linalg.norm(new - phi, axis=1))) if phi.size else 0.0
        phi = new
        repeated = np.array_equal(new_idx, idx)
        idx = new_idx
        if repeated or shift < tol:
            converged = True
            break
    return OptimizationResult(phi, tuple(trace), Partition(idx, G.n_vertices), it, converged)


def star_deviations(G, phi):
    """|phi(center) - mean(phi(leaves))| for every selected star."""
    phi = _check_embedding(G, phi)
    return np.array([np.linalg.norm(phi[s.center] - phi[list(s.leaves)].mean(axis=0))
                     for s in G.stars])


def is_pluriharmonic(G, phi, tol=1e-9):
    """True iff every selected star's center lies within ``tol`` of its leaves' mean."""
    dev = star_deviations(G, phi)
    return bool(np.all(dev <= tol))


def corner_points(G):
    """Vertices that are not the center of any selected star, ascending."""
    centers = {s.center for s in G.stars}
    return [v for v in range(G.n_vertices) if v not in centers]


# ------------------------------------------------------------ serialisation

_GRAPH_MAGIC = "elastic-graph 1"


def dumps_graph(G):
    """Plain-text form: vertex count, one line per edge and per star."""
    lines = [_GRAPH_MAGIC, f"vertices {G.n_vertices}", f"primitive {int(G.primitive)}"]
    for (u, v), lam in zip(G.edges.tolist(), G.edge_moduli.tolist()):
        lines.append(f"edge {u} {v} {lam!r}")
    for st in G.stars:
        lines.append(f"star {st.center} {st.modulus!r} " + " ".join(map(str, st.leaves)))
    return "\n".join(lines) + "\n"


def loads_graph(text):
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != _GRAPH_MAGIC:
        raise ParseError("not an elastic graph file", row=0)
    n = None
    primitive = False
    edges, lams, stars = [], [], []
    for row, ln in enumerate(lines[1:], start=1):
        parts = ln.split()
        try:
            if parts[0] == "vertices":
                n = int(parts[1])
            elif parts[0] == "primitive":
                primitive = bool(int(parts[1]))
            elif parts[0] == "edge":
                edges.append((int(parts[1]), int(parts[2])))
                lams.append(float(parts[3]))
            elif parts[0] == "star":
                stars.append(Star(int(parts[1]), tuple(int(p) for p in parts[3:]), float(parts[2])))
            else:
                raise ParseError(f"unknown record {parts[0]!r}", row=row)
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"malformed record {ln!r}", row=row) from None
    if n is None:
        raise ParseError("missing vertex count")
    return ElasticGraph(n, np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(lams),
                        tuple(stars), primitive)
