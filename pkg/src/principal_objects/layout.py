"""Metro-map layouts of principal trees.

The tree is drawn radially from a root: every vertex spreads its incident
edges at equal angles, every edge keeps its embedded length times one global
scale, and the cyclic order of a vertex's children follows the order of
their projections on a principal plane. Nodes can carry pie charts of class
counts. Edge crossings are possible; they are detected and logged only.
"""

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from .dataset import DataMatrix
from .errors import LabelLengthError, NotATreeError
from .pca import fit_components

log = logging.getLogger(__name__)

__all__ = [
    "TreeLayout",
    "PieStats",
    "layout_metro_map",
    "pie_statistics",
    "emit_svg",
    "dumps_layout",
    "count_crossings",
]

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


@dataclass(frozen=True, eq=False)
class TreeLayout:
    positions: np.ndarray
    root: int
    edge_angles: dict
    scale: float
    edges: np.ndarray
    crossings: int = 0


@dataclass(frozen=True, eq=False)
class PieStats:
    counts: np.ndarray
    classes: tuple
    totals: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "totals", self.counts.sum(axis=1))


def _tree_root(G, lengths):
    n = G.n_vertices
    if n == 1:
        return 0
    e = G.edges
    # zero-length edges would vanish from a sparse matrix
    adj = coo_matrix((np.maximum(lengths, 1e-300), (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    dist = shortest_path(adj, directed=False)
    ecc = dist.max(axis=1)
    return int(np.argmin(ecc))


def _angle(v):
    return math.atan2(v[1], v[0]) % (2 * math.pi)


def _star_plane(v, neighbors, X, partition):
    """Principal plane of the data assigned to a star, or None if it is too thin."""
    if X is None or partition is None:
        return None
    members = np.flatnonzero(np.isin(partition.assignment, [v, *neighbors]))
    if members.size < 3:
        return None
    sub = X.subset(members)
    try:
        local = fit_components(sub, min(2, sub.m, sub.n - 1), rng=0)
    except ValueError:
        return None
    return local if local.k == 2 else None


def _plane_coords(points, basis):
    comps = basis.components[:2]
    out = (points - basis.origin) @ comps.T
    if out.shape[1] < 2:
        out = np.hstack([out, np.zeros((out.shape[0], 2 - out.shape[1]))])
    return out


def layout_metro_map(tree, phi, basis=None, local_plane=False, X=None, partition=None):
    """Equiangular, length-proportional radial layout of ``tree``.

    ``basis`` supplies the principal plane used to order children (computed
    from the vertex positions when omitted). With ``local_plane`` each star
    is ordered on the principal plane of its own data points (``X`` and
    ``partition`` required), falling back to the global plane for sparse
    stars.
    """
    if not tree.is_tree():
        raise NotATreeError("metro map layout needs a connected acyclic graph")
    phi = np.asarray(phi, dtype=np.float64)
    n = tree.n_vertices
    e = tree.edges
    lengths = np.linalg.norm(phi[e[:, 0]] - phi[e[:, 1]], axis=1) if len(e) else np.zeros(0)
    mean_len = lengths.mean() if lengths.size else 0.0
    scale = 1.0 / mean_len if mean_len > 0 else 1.0
    if basis is None and n > 2:
        basis = fit_components(DataMatrix(phi), min(2, phi.shape[1], n - 1), rng=0)
    if basis is not None:
        plane = _plane_coords(phi, basis)
    else:
        plane = np.zeros((n, 2))
        plane[:, 0] = np.arange(n)
    length_of = {}
    for (u, v), ln in zip(e.tolist(), lengths.tolist()):
        length_of[(u, v)] = length_of[(v, u)] = ln

    root = _tree_root(tree, lengths)
    pos = np.zeros((n, 2))
    angles = {}
    parent = {root: None}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        nbs = tree.neighbors[v]
        children = [c for c in nbs if c != parent[v]]
        d = len(nbs)
        if not children:
            continue
        pl = plane
        if local_plane:
            local = _star_plane(v, nbs, X, partition)
            if local is not None:
                pl = _plane_coords(phi, local)
        if parent[v] is None:
            ref = 0.0
            base = 0.0
            rel = {c: _angle(pl[c] - pl[v]) for c in children}
            order = sorted(children, key=lambda c: (rel[c], c))
            slots = range(len(order))
        else:
            ref = _angle(pl[parent[v]] - pl[v])
            base = angles[(v, parent[v])]
            rel = {c: (_angle(pl[c] - pl[v]) - ref) % (2 * math.pi) for c in children}
            order = sorted(children, key=lambda c: (rel[c], c))
            slots = range(1, len(order) + 1)
        for slot, c in zip(slots, order):
            theta = (base + 2 * math.pi * slot / d) % (2 * math.pi)
            angles[(v, c)] = theta
            angles[(c, v)] = (theta + math.pi) % (2 * math.pi)
            step = scale * length_of[(v, c)]
            pos[c] = pos[v] + step * np.array([math.cos(theta), math.sin(theta)])
            parent[c] = v
            queue.append(c)
    crossings = count_crossings(pos, e)
    if crossings:
        log.info("metro map layout has %d edge crossings", crossings)
    return TreeLayout(pos, root, angles, scale, e.copy(), crossings)


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def count_crossings(pos, edges):
    """Proper crossings between edges that share no endpoint."""
    edges = np.asarray(edges).reshape(-1, 2)
    count = 0
    for a in range(len(edges)):
        for b in range(a + 1, len(edges)):
            if set(edges[a].tolist()) & set(edges[b].tolist()):
                continue
            if _segments_cross(pos[edges[a, 0]], pos[edges[a, 1]],
                               pos[edges[b, 0]], pos[edges[b, 1]]):
                count += 1
    return count


def pie_statistics(partition, labels, classes=None):
    """Per-vertex class histogram of the rows assigned by ``partition``."""
    labels = list(labels)
    if len(labels) != len(partition.assignment):
        raise LabelLengthError(
            f"{len(labels)} labels for {len(partition.assignment)} observations")
    if classes is None:
        classes = tuple(sorted(set(labels), key=str))
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((partition.k, len(classes)), dtype=np.int64)
    for v, lab in zip(partition.assignment.tolist(), labels):
        counts[v, index[lab]] += 1
    return PieStats(counts, tuple(classes))


def _fmt(x):
    s = f"{x:.3f}"
    return "0.000" if s == "-0.000" else s


def _pie_paths(cx, cy, radius, counts, colors):
    total = counts.sum()
    nonzero = np.flatnonzero(counts)
    if total == 0:
        return [f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="0" class="node"/>']
    if nonzero.size == 1:
        c = colors[nonzero[0]]
        return [f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(radius)}" '
                f'fill="{c}" class="node"/>']
    out = ['<g class="node">']
    start = -math.pi / 2
    for j in nonzero:
        sweep = 2 * math.pi * counts[j] / total
        end = start + sweep
        x0, y0 = cx + radius * math.cos(start), cy + radius * math.sin(start)
        x1, y1 = cx + radius * math.cos(end), cy + radius * math.sin(end)
        large = 1 if sweep > math.pi else 0
        out.append(f'<path d="M {_fmt(cx)} {_fmt(cy)} L {_fmt(x0)} {_fmt(y0)} '
                   f'A {_fmt(radius)} {_fmt(radius)} 0 {large} 1 {_fmt(x1)} {_fmt(y1)} Z" '
                   f'fill="{colors[j]}"/>')
        start = end
    out.append("</g>")
    return out


def emit_svg(layout, pies=None, style=None, sink=None):
    """Render the layout as SVG 1.1 and return the bytes.

    Node pies have area proportional to their counts. ``style`` may set
    ``width``, ``margin``, ``node_radius`` (largest pie radius), ``stroke``
    and ``line_width``. When ``sink`` is a path or a binary file object the
    bytes are also written there.
    """
    st = {"width": 800.0, "margin": 40.0, "node_radius": 14.0, "stroke": "#444444",
          "line_width": 3.0}
    st.update(style or {})
    pos = layout.positions
    lo, hi = pos.min(axis=0), pos.max(axis=0)
    span = max(float((hi - lo).max()), 1e-12)
    inner = st["width"] - 2 * st["margin"]
    k = inner / span
    # flip y so that the layout's counter-clockwise order is kept on screen
    px = st["margin"] + (pos[:, 0] - lo[0]) * k
    py = st["margin"] + (hi[1] - pos[:, 1]) * k
    height = st["margin"] * 2 + (hi[1] - lo[1]) * k
    legend_h = 20.0 * (len(pies.classes) + 1) if pies is not None else 0.0
    total_h = height + legend_h
    lines = ['<?xml version="1.0" encoding="UTF-8"?>',
             f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
             f'width="{_fmt(st["width"])}" height="{_fmt(total_h)}" '
             f'viewBox="0 0 {_fmt(st["width"])} {_fmt(total_h)}">',
             f'<g class="edges" stroke="{st["stroke"]}" stroke-width="{_fmt(st["line_width"])}">']
    for u, v in layout.edges.tolist():
        lines.append(f'<line x1="{_fmt(px[u])}" y1="{_fmt(py[u])}" '
                     f'x2="{_fmt(px[v])}" y2="{_fmt(py[v])}"/>')
    lines.append("</g>")
    lines.append('<g class="nodes" stroke="#000000" stroke-width="0.5">')
    if pies is None:
        for v in range(len(pos)):
            lines.append(f'<circle cx="{_fmt(px[v])}" cy="{_fmt(py[v])}" '
                         f'r="{_fmt(st["node_radius"] / 2)}" fill="#ffffff" class="node"/>')
    else:
        colors = [PALETTE[i % len(PALETTE)] for i in range(len(pies.classes))]
        biggest = max(int(pies.totals.max()), 1)
        for v in range(len(pos)):
            radius = st["node_radius"] * math.sqrt(pies.totals[v] / biggest)
            lines.extend(_pie_paths(px[v], py[v], radius, pies.counts[v], colors))
    lines.append("</g>")
    if pies is not None:
        lines.append('<g class="legend" font-family="sans-serif" font-size="12">')
        for i, name in enumerate(pies.classes):
            y = height + 20.0 * i
            lines.append(f'<rect x="{_fmt(st["margin"])}" y="{_fmt(y)}" width="12" height="12" '
                         f'fill="{colors[i]}"/>')
            lines.append(f'<text x="{_fmt(st["margin"] + 18)}" y="{_fmt(y + 10)}">'
                         f'{_escape(str(name))}</text>')
        lines.append("</g>")
    lines.append("</svg>")
    data = ("\n".join(lines) + "\n").encode("utf-8")
    if sink is not None:
        if hasattr(sink, "write"):
            sink.write(data)
        else:
            with open(sink, "wb") as fh:
                fh.write(data)
    return data


def _escape(text):
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def dumps_layout(layout, pies=None):
    """Layout as JSON: positions, edge angles, root, scale and optional pie counts."""
    doc = {
        "root": int(layout.root),
        "scale": float(layout.scale),
        "crossings": int(layout.crossings),
        "positions": [[float(x), float(y)] for x, y in layout.positions],
        "edges": [[int(u), int(v), float(layout.edge_angles[(u, v)])]
                  for u, v in layout.edges.tolist()],
    }
    if pies is not None:
        doc["classes"] = [str(c) for c in pies.classes]
        doc["pies"] = pies.counts.tolist()
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"
