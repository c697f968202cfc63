"""Graph grammars and greedy growth of elastic principal graphs.

Four operations act on primitive elastic graphs:

* add-node-to-node: attach a new leaf to any vertex;
* bisect-edge: replace an edge by a path through a new vertex;
* remove-leaf: delete a degree-1 vertex and its edge;
* remove-edge: contract an edge between two non-terminal vertices, merging
  their stars.

Because the graphs are primitive, the star family is recomputed from the new
topology after every operation. Growth applies each grammar of a sequence
in turn, optimises every permissible candidate and adopts the one with the
lowest energy.
"""

import enum
import json
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .elastic_graph import (
    ElasticGraph,
    EnergyBreakdown,
    optimize_embedding,
    partition_by_vertices,
    total_functional,
)
from .errors import PrincipalError
from .kmeans import cluster_means
from .pca import fit_first_component

log = logging.getLogger(__name__)

__all__ = [
    "GrammarOp",
    "GROW",
    "SHRINK",
    "Moduli",
    "ComplexityBudget",
    "Candidate",
    "GrowthRecord",
    "GrowthResult",
    "application_sites",
    "transform_topology",
    "apply_grammar_op",
    "structural_complexity",
    "initial_segment",
    "grow_principal_graph",
    "construction_complexity",
    "replay_log",
    "dumps_log",
    "loads_log",
]


class GrammarOp(enum.Enum):
    ADD_NODE = "add-node-to-node"
    BISECT_EDGE = "bisect-edge"
    REMOVE_LEAF = "remove-leaf"
    REMOVE_EDGE = "remove-edge"

    @property
    def rank(self):
        return _OP_RANK[self]


_OP_RANK = {op: i for i, op in enumerate(GrammarOp)}

GROW = (GrammarOp.ADD_NODE, GrammarOp.BISECT_EDGE)
SHRINK = (GrammarOp.REMOVE_LEAF, GrammarOp.REMOVE_EDGE)

NAMED_GRAMMARS = {"grow": GROW, "shrink": SHRINK}


@dataclass(frozen=True)
class Moduli:
    lam: float = 0.01
    mu: float = 0.1


@dataclass(frozen=True)
class ComplexityBudget:
    """Structural ceiling ``sc_max`` under ``policy`` and at most ``cc_max`` applications.

    ``policy`` is ``"vertices"`` (SC = |V|) or ``"branches"`` (SC = number of
    3-stars, infinite once a star of order four or more appears; ``sc_max``
    plays the role of the branch cap).
    """

    policy: str = "vertices"
    sc_max: float = math.inf
    cc_max: float = math.inf

    def __post_init__(self):
        if self.policy not in ("vertices", "branches"):
            raise ValueError(f"unknown complexity policy {self.policy!r}")

    def permits(self, G):
        return structural_complexity(G, self.policy, self.sc_max) <= self.sc_max


def structural_complexity(G, policy="vertices", b_max=math.inf):
    if policy == "vertices":
        return G.n_vertices
    if policy == "branches":
        orders = G.star_orders()
        n3 = orders.get(3, 0)
        higher = sum(c for k, c in orders.items() if k >= 4)
        return n3 if n3 <= b_max and higher == 0 else math.inf
    raise ValueError(f"unknown complexity policy {policy!r}")


# --------------------------------------------------------------- topology


def application_sites(op, G):
    """All places ``op`` can be applied to ``G``, in a fixed order."""
    deg = G.degrees
    if op is GrammarOp.ADD_NODE:
        return [(v,) for v in range(G.n_vertices)]
    if op is GrammarOp.BISECT_EDGE:
        return [tuple(e) for e in G.edges.tolist()]
    if op is GrammarOp.REMOVE_LEAF:
        if G.n_vertices < 2:
            return []
        return [(v,) for v in range(G.n_vertices) if deg[v] == 1]
    if op is GrammarOp.REMOVE_EDGE:
        # an edge to a terminal vertex is handled by remove-leaf
        return [tuple(e) for e in G.edges.tolist() if deg[e[0]] >= 2 and deg[e[1]] >= 2]
    raise ValueError(op)


def transform_topology(op, n_vertices, edges, site):
    """Apply one operation to a bare topology.

    Returns ``(n_new, edges_new, origin)``. ``origin[i]`` describes new vertex
    ``i`` in terms of old ones: ``("copy", v)``, ``("mid", u, v)`` or
    ``("grow", parent)``.
    """
    edges = [tuple(e) for e in edges]
    if op is GrammarOp.ADD_NODE:
        (v,) = site
        origin = [("copy", i) for i in range(n_vertices)] + [("grow", v)]
        return n_vertices + 1, edges + [(v, n_vertices)], origin
    if op is GrammarOp.BISECT_EDGE:
        u, v = site
        z = n_vertices
        pos = edges.index((min(u, v), max(u, v)))
        new_edges = edges[:pos] + [(u, z)] + edges[pos + 1:] + [(z, v)]
        origin = [("copy", i) for i in range(n_vertices)] + [("mid", u, v)]
        return n_vertices + 1, new_edges, origin
    if op is GrammarOp.REMOVE_LEAF:
        (v,) = site
        remap = {i: i - (i > v) for i in range(n_vertices) if i != v}
        new_edges = [(remap[a], remap[b]) for a, b in edges if v not in (a, b)]
        origin = [("copy", i) for i in range(n_vertices) if i != v]
        return n_vertices - 1, new_edges, origin
    if op is GrammarOp.REMOVE_EDGE:
        keep, drop = site
        remap = {i: i - (i > drop) for i in range(n_vertices) if i != drop}
        seen = set()
        new_edges = []
        for a, b in edges:
            if {a, b} == {keep, drop}:
                continue
            a = keep if a == drop else a
            b = keep if b == drop else b
            key = (min(a, b), max(a, b))
            if a == b or key in seen:
                continue
            seen.add(key)
            new_edges.append((remap[a], remap[b]))
        origin = [("mid", keep, drop) if i == keep else ("copy", i)
                  for i in range(n_vertices) if i != drop]
        return n_vertices - 1, new_edges, origin
    raise ValueError(op)


def grown_vertex_position(phi, parent, neighbors, cluster_mean, scale):
    """Seed for a new leaf attached to ``parent``.

    Half-way toward the mean of the parent's cluster; when that mean is
    unavailable or coincides with the parent, a short step of length
    ``1e-3 * scale`` away from the parent's neighbours.
    """
    p = phi[parent]
    if cluster_mean is not None:
        offset = cluster_mean - p
        if np.linalg.norm(offset) > 1e-12 * max(scale, 1.0):
            return p + 0.5 * offset
    direction = np.zeros_like(p)
    if len(neighbors):
        direction = p - phi[list(neighbors)].mean(axis=0)
    norm = np.linalg.norm(direction)
    if norm == 0:
        direction = np.zeros_like(p)
        direction[0] = 1.0
        norm = 1.0
    return p + 1e-3 * max(scale, 1e-12) * direction / norm


def seed_embedding(origin, phi, grow_seed):
    rows = []
    for o in origin:
        if o[0] == "copy":
            rows.append(phi[o[1]])
        elif o[0] == "mid":
            rows.append(0.5 * (phi[o[1]] + phi[o[2]]))
        else:
            rows.append(grow_seed(o[1]))
    return np.array(rows)


@dataclass(eq=False)
class Candidate:
    graph: ElasticGraph
    op: GrammarOp
    site: tuple
    embedding: np.ndarray
    energy: EnergyBreakdown = None
    factor: int = None

    @property
    def sort_key(self):
        total = self.energy.total if self.energy is not None else math.inf
        return (total, -1 if self.factor is None else self.factor, self.op.rank)


def _cluster_means(X, phi):
    if X is None:
        return None
    part = partition_by_vertices(X, phi)
    means = cluster_means(X, part, np.full_like(phi, np.nan))
    means[part.counts == 0] = np.nan
    return means


def _data_scale(X, phi):
    if X is not None:
        spread = X.values.max(axis=0) - X.values.min(axis=0)
        return float(np.linalg.norm(spread))
    return float(np.linalg.norm(phi.max(axis=0) - phi.min(axis=0))) if len(phi) else 1.0


def apply_grammar_op(op, G, phi, moduli, X=None):
    """One seeded (not yet optimised) candidate per application site."""
    phi = np.asarray(phi, dtype=np.float64)
    means = _cluster_means(X, phi)
    scale = _data_scale(X, phi)

    def grow_seed(parent):
        cm = None
        if means is not None and not np.isnan(means[parent]).any():
            cm = means[parent]
        return grown_vertex_position(phi, parent, G.neighbors[parent], cm, scale)

    out = []
    for site in application_sites(op, G):
        n_new, edges, origin = transform_topology(op, G.n_vertices, G.edges.tolist(), site)
        graph = ElasticGraph.primitive_from_edges(
            n_new, np.array(edges, dtype=np.int64).reshape(-1, 2), moduli.lam, moduli.mu)
        out.append(Candidate(graph, op, site, seed_embedding(origin, phi, grow_seed)))
    return out


# ----------------------------------------------------------------- growth


@dataclass(frozen=True)
class GrowthRecord:
    step: int
    round: int
    grammar: int
    op: str
    site: tuple
    n_vertices: int
    sc: float
    energy: dict
    candidates: tuple = ()
    factor: int = None


@dataclass(frozen=True, eq=False)
class GrowthResult:
    graph: ElasticGraph
    embedding: np.ndarray
    log: tuple
    initial_graph: ElasticGraph
    initial_embedding: np.ndarray
    energy: EnergyBreakdown


def initial_segment(X, moduli, rng=None):
    """Two vertices on the first principal line spanning all data projections."""
    pc = fit_first_component(X, rng=rng, check_degeneracy=False)
    lo, hi = float(pc.scores.min()), float(pc.scores.max())
    phi = np.array([pc.origin + lo * pc.direction, pc.origin + hi * pc.direction])
    return ElasticGraph.chain(2, moduli.lam, moduli.mu), phi


def evaluate_candidate(X, cand, max_iter):
    res = optimize_embedding(X, cand.graph, cand.embedding, max_iter=max_iter)
    cand.embedding = res.embedding
    cand.energy = res.energy
    return cand


def _select(X, candidates, budget, candidate_iter, label):
    permissible = [c for c in candidates if budget.permits(c.graph)]
    evaluated = []
    for c in permissible:
        try:
            evaluated.append(evaluate_candidate(X, c, candidate_iter or 1000))
        except PrincipalError as exc:
            log.warning("%s: skipping %s at %s: %s", label, c.op.value, c.site, exc)
    if not evaluated:
        return None, permissible, evaluated
    # min() keeps the first of equal keys, i.e. the lowest site index
    best = min(evaluated, key=lambda c: c.sort_key)
    return best, permissible, evaluated


def _record(step, rnd, j, best, budget, evaluated, energy):
    return GrowthRecord(
        step=step, round=rnd, grammar=j, op=best.op.value, site=tuple(best.site),
        n_vertices=best.graph.n_vertices,
        sc=structural_complexity(best.graph, budget.policy, budget.sc_max),
        energy=energy.as_dict(),
        candidates=tuple((c.op.value, tuple(c.site), c.energy.total) for c in evaluated),
        factor=best.factor,
    )


def grow_principal_graph(X, grammar_sequence=(GROW,), budget=None, moduli=None,
                         candidate_iter=20, max_iter=100, rng=None, initial=None):
    """Greedy energy-guided growth of an elastic principal graph.

    Each round applies every grammar of ``grammar_sequence`` once: all
    permissible candidates are optimised (capped at ``candidate_iter``
    solves; ``None`` runs them to convergence) and the lowest-energy one is
    adopted and re-optimised to convergence. Growth ends when a grammar has
    no permissible candidate or ``budget.cc_max`` applications were made.
    """
    budget = budget or ComplexityBudget()
    moduli = moduli or Moduli()
    if initial is None:
        G, phi = initial_segment(X, moduli, rng)
    else:
        G, phi = initial
        phi = np.asarray(phi, dtype=np.float64)
    if not budget.permits(G):
        raise ValueError("budget does not admit the initial graph")
    G0, phi0 = G, phi.copy()
    energy = total_functional(X, G, phi)
    records = []
    step = 0
    rnd = 0
    done = False
    while not done:
        for j, grammar in enumerate(grammar_sequence):
            if step >= budget.cc_max:
                done = True
                break
            candidates = [c for op in grammar for c in apply_grammar_op(op, G, phi, moduli, X)]
            best, permissible, evaluated = _select(X, candidates, budget, candidate_iter,
                                                   f"round {rnd}")
            if best is None:
                done = True
                break
            res = optimize_embedding(X, best.graph, best.embedding, max_iter=max_iter)
            G, phi, energy = best.graph, res.embedding, res.energy
            step += 1
            records.append(_record(step, rnd, j, best, budget, evaluated, energy))
            log.info("step %d: %s at %s -> |V|=%d, U=%.6g", step, best.op.value,
                     best.site, G.n_vertices, energy.total)
        rnd += 1
    return GrowthResult(G, phi, tuple(records), G0, phi0, energy)


def construction_complexity(log_records):
    """Number of adopted grammar applications."""
    return len(log_records)


def replay_log(log_records, initial_graph, moduli):
    """Rebuild the final topology by re-applying the adopted operations."""
    G = initial_graph
    for rec in log_records:
        n_new, edges, _ = transform_topology(GrammarOp(rec.op), G.n_vertices,
                                             G.edges.tolist(), tuple(rec.site))
        G = ElasticGraph.primitive_from_edges(
            n_new, np.array(edges, dtype=np.int64).reshape(-1, 2), moduli.lam, moduli.mu)
    return G


def dumps_log(log_records):
    """One JSON object per line."""
    lines = []
    for rec in log_records:
        d = asdict(rec)
        d["sc"] = None if math.isinf(d["sc"]) else d["sc"]
        lines.append(json.dumps(d, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def loads_log(text):
    out = []
    for ln in text.splitlines():
        if not ln.strip():
            continue
        d = json.loads(ln)
        d["site"] = tuple(d["site"])
        d["sc"] = math.inf if d["sc"] is None else d["sc"]
        d["candidates"] = tuple((c[0], tuple(c[1]), c[2]) for c in d["candidates"])
        out.append(GrowthRecord(**d))
    return tuple(out)
