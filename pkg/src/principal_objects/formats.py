"""Plain-text formats for tables, point sets and linear bases."""

import io

import numpy as np

from .errors import ParseError
from .pca import PCABasis

__all__ = ["dumps_table", "loads_points", "dumps_points", "dumps_basis", "loads_basis"]


def _num(x):
    return repr(float(x))


def dumps_table(values, gaps=None, header=None, labels=None, gap_token="NA"):
    """Comma-separated table; gapped cells are written as ``gap_token``."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    out = io.StringIO()
    if header is not None:
        cols = list(header) + (["label"] if labels is not None else [])
        out.write(",".join(cols) + "\n")
    for i, row in enumerate(values):
        cells = [gap_token if gaps is not None and gaps[i, j] else _num(v)
                 for j, v in enumerate(row)]
        if labels is not None:
            cells.append(str(labels[i]))
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def dumps_points(points, magic="points 1"):
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    lines = [magic, f"rows {points.shape[0]} {points.shape[1]}"]
    lines += [" ".join(_num(v) for v in row) for row in points]
    return "\n".join(lines) + "\n"


def loads_points(text, magic="points 1"):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != magic:
        raise ParseError(f"expected a {magic!r} file", row=0)
    try:
        n, m = (int(v) for v in lines[1].split()[1:3])
        arr = np.array([[float(v) for v in ln.split()] for ln in lines[2:2 + n]])
    except (IndexError, ValueError):
        raise ParseError("malformed point file") from None
    if arr.shape != (n, m):
        raise ParseError(f"expected {n} rows of {m} values")
    return arr


def dumps_basis(basis):
    lines = ["pca-basis 1", f"components {basis.k} {basis.origin.shape[0]}",
             "origin " + " ".join(_num(v) for v in basis.origin)]
    for lam, a in zip(basis.eigenvalues, basis.components):
        lines.append(f"component {_num(lam)} " + " ".join(_num(v) for v in a))
    return "\n".join(lines) + "\n"


def loads_basis(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "pca-basis 1":
        raise ParseError("not a pca basis file", row=0)
    try:
        k, m = (int(v) for v in lines[1].split()[1:3])
        origin = np.array([float(v) for v in lines[2].split()[1:]])
        lams, comps = [], []
        for ln in lines[3:3 + k]:
            parts = ln.split()
            lams.append(float(parts[1]))
            comps.append([float(v) for v in parts[2:]])
    except (IndexError, ValueError):
        raise ParseError("malformed pca basis file") from None
    comps = np.array(comps).reshape(k, m)
    if origin.shape != (m,):
        raise ParseError("origin has the wrong length")
    return PCABasis(origin, comps, np.array(lams))
