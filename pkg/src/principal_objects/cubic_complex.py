"""Principal cubic complexes: Cartesian products of elastic graphs.

A vertex of G_1 x ... x G_r is a tuple (v_1, ..., v_r), numbered in
row-major order. Fixing every coordinate except the i-th gives one copy of
G_i; the product's edges and stars are the union of the elements of all
copies, each keeping its factor's modulus. Growth applies grammar
operations to single factors, so the number of trials per round is the sum
of the factor candidate counts instead of the candidate count of the whole
product.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .elastic_graph import (
    ElasticGraph,
    Star,
    dumps_graph,
    elastic_energy,
    loads_graph,
    optimize_embedding,
    total_functional,
)
from .errors import InvariantViolation, ParseError, PrincipalError
from .grammar import (
    GROW,
    Candidate,
    ComplexityBudget,
    Moduli,
    _cluster_means,
    _data_scale,
    _record,
    application_sites,
    grown_vertex_position,
    initial_segment,
    transform_topology,
)
from .pca import fit_components, project_to_basis

log = logging.getLogger(__name__)

__all__ = [
    "CubicComplex",
    "ProductEnergy",
    "ComplexGrowthResult",
    "cartesian_product",
    "product_counts",
    "product_energy_check",
    "factorized_candidate_count",
    "product_candidate_count",
    "initial_complex",
    "grow_product",
    "dumps_complex",
    "loads_complex",
]


def _vertex_tuples(sizes):
    return np.array(list(np.ndindex(*sizes)), dtype=np.int64).reshape(-1, len(sizes))


def _strides(sizes):
    out = np.ones(len(sizes), dtype=np.int64)
    for i in range(len(sizes) - 2, -1, -1):
        out[i] = out[i + 1] * sizes[i + 1]
    return out


def _copies(sizes, i):
    """Product indices of every copy of factor ``i``: array (n_copies, |V_i|)."""
    strides = _strides(sizes)
    others = [s for j, s in enumerate(sizes) if j != i]
    rows = []
    for rest in np.ndindex(*others):
        coords = list(rest)
        coords.insert(i, 0)
        base = int(np.dot(coords, strides))
        rows.append(base + strides[i] * np.arange(sizes[i]))
    return np.array(rows, dtype=np.int64).reshape(-1, sizes[i])


def cartesian_product(factors):
    """Materialised product graph of ``factors`` (row-major vertex numbering)."""
    factors = list(factors)
    if not factors:
        raise InvariantViolation("a product needs at least one factor")
    sizes = [G.n_vertices for G in factors]
    edges, lams, stars = [], [], []
    for i, G in enumerate(factors):
        for copy in _copies(sizes, i):
            for (u, v), lam in zip(G.edges.tolist(), G.edge_moduli.tolist()):
                edges.append((int(copy[u]), int(copy[v])))
                lams.append(lam)
            for st in G.stars:
                stars.append(Star(int(copy[st.center]),
                                  tuple(int(copy[x]) for x in st.leaves), st.modulus))
    primitive = len(factors) == 1 and factors[0].primitive
    return ElasticGraph(int(np.prod(sizes)), np.array(edges, dtype=np.int64).reshape(-1, 2),
                        np.array(lams), tuple(stars), primitive)


def product_counts(factors):
    """Vertex, edge and star counts of the product by the closed formulas."""
    sizes = [G.n_vertices for G in factors]
    total = int(np.prod(sizes))
    n_edges = sum(G.n_edges * total // G.n_vertices for G in factors)
    n_stars = sum(len(G.stars) * total // G.n_vertices for G in factors)
    return total, n_edges, n_stars


@dataclass(frozen=True, eq=False)
class CubicComplex:
    factors: tuple
    graph: ElasticGraph = field(init=False, repr=False)
    vertex_tuples: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        factors = tuple(self.factors)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "graph", cartesian_product(factors))
        object.__setattr__(self, "vertex_tuples",
                           _vertex_tuples([G.n_vertices for G in factors]))

    @property
    def r(self):
        return len(self.factors)

    @property
    def sizes(self):
        return tuple(G.n_vertices for G in self.factors)

    def copies(self, i):
        return _copies(self.sizes, i)

    def with_factor(self, i, G):
        return CubicComplex(self.factors[:i] + (G,) + self.factors[i + 1:])


@dataclass(frozen=True)
class ProductEnergy:
    materialized: object
    by_copies: object

    def discrepancy(self):
        a, b = self.materialized, self.by_copies
        return max(abs(a.stretching - b.stretching), abs(a.bending - b.bending))


def product_energy_check(factors, phi):
    """Elastic energy of the materialised product and, independently, the sum over factor copies."""
    cx = factors if isinstance(factors, CubicComplex) else CubicComplex(tuple(factors))
    phi = np.asarray(phi, dtype=np.float64)
    whole = elastic_energy(cx.graph, phi)
    ue = ur = 0.0
    for i, G in enumerate(cx.factors):
        for copy in cx.copies(i):
            part = elastic_energy(G, phi[copy])
            ue += part.stretching
            ur += part.bending
    return ProductEnergy(whole, type(whole)(0.0, ue, ur))


def factorized_candidate_count(factors, grammar=GROW):
    """Trials per round when operations act on factors."""
    return sum(len(application_sites(op, G)) for G in factors for op in grammar)


def product_candidate_count(factors, grammar=GROW):
    """Trials per round if the same operations acted on the materialised product."""
    P = cartesian_product(factors)
    return sum(len(application_sites(op, P)) for op in grammar)


# ----------------------------------------------------------------- growth


def initial_complex(X, r, moduli=None, rng=None):
    """r two-vertex chains embedded as the box spanned by the data on the first r principal axes.

    For r = 1 this is the initial segment of the principal graph growth.
    """
    moduli = moduli or Moduli()
    if r == 1:
        G, phi = initial_segment(X, moduli, rng)
        return CubicComplex((G,)), phi
    basis = fit_components(X, r, rng=rng)
    if basis.k < r:
        raise InvariantViolation(f"data span only {basis.k} principal directions")
    beta = project_to_basis(X, basis)
    lo, hi = beta.min(axis=0), beta.max(axis=0)
    cx = CubicComplex(tuple(ElasticGraph.chain(2, moduli.lam, moduli.mu) for _ in range(r)))
    local = lo + cx.vertex_tuples * (hi - lo)
    return cx, basis.origin + local @ basis.components


def _seed_product(cx, i, origin, phi, grow_seed):
    """Positions for the product after factor ``i`` was rewritten with ``origin``."""
    sizes = list(cx.sizes)
    new_sizes = sizes.copy()
    new_sizes[i] = len(origin)
    strides = _strides(sizes)
    out = np.empty((int(np.prod(new_sizes)), phi.shape[1]))
    for idx, t in enumerate(np.ndindex(*new_sizes)):
        t = list(t)
        o = origin[t[i]]

        def at(v):
            t[i] = v
            return int(np.dot(t, strides))

        if o[0] == "copy":
            out[idx] = phi[at(o[1])]
        elif o[0] == "mid":
            out[idx] = 0.5 * (phi[at(o[1])] + phi[at(o[2])])
        else:
            out[idx] = grow_seed(at(o[1]), [at(nb) for nb in cx.factors[i].neighbors[o[1]]])
    return out


def _factor_candidates(X, cx, phi, grammar, moduli, budget):
    means = _cluster_means(X, phi)
    scale = _data_scale(X, phi)

    def grow_seed(parent, neighbors):
        cm = None
        if means is not None and not np.isnan(means[parent]).any():
            cm = means[parent]
        return grown_vertex_position(phi, parent, neighbors, cm, scale)

    out = []
    for i, G in enumerate(cx.factors):
        for op in grammar:
            for site in application_sites(op, G):
                n_new, edges, origin = transform_topology(op, G.n_vertices, G.edges.tolist(), site)
                factor = ElasticGraph.primitive_from_edges(
                    n_new, np.array(edges, dtype=np.int64).reshape(-1, 2), moduli.lam, moduli.mu)
                if not budget.permits(factor):
                    continue
                new_cx = cx.with_factor(i, factor)
                cand = Candidate(new_cx.graph, op, site,
                                 _seed_product(cx, i, origin, phi, grow_seed), factor=i)
                cand.complex = new_cx
                out.append(cand)
    return out


@dataclass(frozen=True, eq=False)
class ComplexGrowthResult:
    complex: CubicComplex
    embedding: np.ndarray
    log: tuple
    energy: object


def grow_product(X, complex_=None, grammar_sequence=(GROW,), budget=None, moduli=None,
                 candidate_iter=20, max_iter=100, rng=None, phi0=None, r=2):
    """Greedy growth of a cubic complex with grammar operations applied to single factors.

    The complexity budget's structural ceiling applies to each factor; its
    construction ceiling counts adopted operations over all factors. Ties
    in energy go to the lower factor index, then the operation order, then
    the site order.
    """
    budget = budget or ComplexityBudget()
    moduli = moduli or Moduli()
    if complex_ is None:
        cx, phi = initial_complex(X, r, moduli, rng)
    else:
        if phi0 is None:
            raise InvariantViolation("an explicit complex needs an initial embedding")
        cx, phi = complex_, np.asarray(phi0, dtype=np.float64)
    energy = total_functional(X, cx.graph, phi)
    records = []
    step = rnd = 0
    done = False
    while not done:
        for j, grammar in enumerate(grammar_sequence):
            if step >= budget.cc_max:
                done = True
                break
            evaluated = []
            for cand in _factor_candidates(X, cx, phi, grammar, moduli, budget):
                try:
                    res = optimize_embedding(X, cand.graph, cand.embedding,
                                             max_iter=candidate_iter or 1000)
                except PrincipalError as exc:
                    log.warning("skipping %s on factor %d: %s", cand.op.value, cand.factor, exc)
                    continue
                cand.embedding, cand.energy = res.embedding, res.energy
                evaluated.append(cand)
            if not evaluated:
                done = True
                break
            best = min(evaluated, key=lambda c: c.sort_key)
            res = optimize_embedding(X, best.graph, best.embedding, max_iter=max_iter)
            cx, phi, energy = best.complex, res.embedding, res.energy
            step += 1
            records.append(_record(step, rnd, j, best, budget, evaluated, energy))
            log.info("step %d: %s on factor %d -> sizes %s, U=%.6g", step, best.op.value,
                     best.factor, cx.sizes, energy.total)
        rnd += 1
    return ComplexGrowthResult(cx, phi, tuple(records), energy)


# ---------------------------------------------------------- serialisation

_COMPLEX_MAGIC = "cubic-complex 1"


def dumps_complex(cx):
    parts = [f"{_COMPLEX_MAGIC}\nfactors {cx.r}\n"]
    for G in cx.factors:
        parts.append("factor\n" + dumps_graph(G))
    return "".join(parts)


def loads_complex(text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != _COMPLEX_MAGIC:
        raise ParseError("not a cubic complex file", row=0)
    try:
        r = int(lines[1].split()[1])
    except (IndexError, ValueError):
        raise ParseError("missing factor count", row=1) from None
    chunks = "\n".join(lines[2:]).split("factor\n")
    graphs = [loads_graph(c) for c in chunks if c.strip()]
    if len(graphs) != r:
        raise ParseError(f"expected {r} factors, found {len(graphs)}")
    return CubicComplex(tuple(graphs))

