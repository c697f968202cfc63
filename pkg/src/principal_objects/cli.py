"""Command-line front end: ``prinobj <command> ...``.

Every run writes its artifacts into one output directory together with a
``manifest.json`` holding the merged configuration, the seed, the library
version and the SHA-256 of every input file. Nothing time-dependent is
written, so equal inputs and configuration give byte-identical artifacts.

Options may also come from an INI file given with ``--config``; keys in its
``[prinobj]`` section are option names, and command-line flags win.
"""

import argparse
import configparser
import hashlib
import json
import logging
import math
import os
import sys
from importlib import resources

import numpy as np

from . import __version__
from .cubic_complex import dumps_complex, grow_product
from .dataset import (
    TRIPLETS,
    nearest,
    read_fasta,
    read_table,
    triplet_frequencies,
)
from .elastic_graph import dumps_graph, loads_graph, partition_by_vertices
from .elastic_map import (
    SofteningSchedule,
    dumps_map_model,
    fit_elastic_map,
    loads_map_model,
    make_elastic_net,
    project_dataset,
)
from .errors import InvariantViolation, PrincipalError
from .formats import dumps_basis, dumps_points, dumps_table, loads_basis, loads_points
from .grammar import NAMED_GRAMMARS, ComplexityBudget, Moduli, dumps_log, grow_principal_graph
from .kmeans import fit_kmeans
from .layout import dumps_layout, emit_svg, layout_metro_map, pie_statistics
from .pca import fit_components, project_to_basis, total_variance
from .polyline import PolylineParams, dumps_curve, fit_polyline, loads_curve, partition_polyline

log = logging.getLogger("principal_objects")

BUILTIN_IRIS = "builtin:iris"


class CliError(PrincipalError):
    category = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# ------------------------------------------------------------------ parser


def _add_input(p):
    p.add_argument("--input", help=f"delimited data file, or {BUILTIN_IRIS}")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--gap-token", default="NA", help="cell text marking a missing value")
    p.add_argument("--header", action="store_true", help="first row holds column names")
    p.add_argument("--label-column", help="column (name or index) holding class labels")
    p.add_argument("--weight-column", help="column (name or index) holding row weights")


def _add_common(p, seeded=True):
    p.add_argument("--out", help="output directory")
    if seeded:
        p.add_argument("--seed", type=int, help="random seed (mandatory)")
    p.set_defaults(_seeded=seeded)


def _add_moduli(p):
    p.add_argument("--lam", type=float, default=0.01, help="edge stretching modulus")
    p.add_argument("--mu", type=float, default=0.1, help="star bending modulus")


def build_parser():
    parser = _Parser(prog="prinobj", description="Principal objects for data approximation.")
    parser.add_argument("--config", help="INI file with a [prinobj] section of option defaults")
    parser.add_argument("--log-level", default="WARNING")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    leaves = []

    ingest = sub.add_parser("ingest", help="convert raw inputs to data tables")
    isub = ingest.add_subparsers(dest="kind", parser_class=_Parser)
    p = isub.add_parser("table", help="normalise a delimited table")
    _add_input(p)
    _add_common(p, seeded=False)
    leaves.append(p)
    p = isub.add_parser("triplets", help="triplet frequencies of random genome fragments")
    p.add_argument("--fasta", help="FASTA file")
    p.add_argument("--width", type=int, default=300, help="fragment width")
    p.add_argument("--fragments", type=int, default=5000, help="number of fragments")
    _add_common(p)
    leaves.append(p)

    fit = sub.add_parser("fit", help="fit a principal object")
    fsub = fit.add_subparsers(dest="kind", parser_class=_Parser)
    p = fsub.add_parser("pca", help="linear principal components")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--eps", type=float, default=1e-9)
    leaves.append(p)
    p = fsub.add_parser("kmeans", help="principal points")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seeding", choices=("kmeans++", "uniform"), default="kmeans++")
    p.add_argument("--max-iter", type=int, default=300)
    leaves.append(p)
    p = fsub.add_parser("elastic-map", help="elastic net fitted with softening")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--shape", default="10,10", help="vertices per axis, comma separated")
    p.add_argument("--topology", choices=("segment", "rectangle", "sphere"))
    p.add_argument("--multipliers", default="1000,100,10,1")
    p.add_argument("--resolution-scaling", action="store_true")
    _add_moduli(p)
    leaves.append(p)
    p = fsub.add_parser("tree", help="principal tree by grammar growth")
    p.add_argument("--nodes", type=int, default=50, help="vertex ceiling")
    p.add_argument("--grammar", default="grow,grow,shrink",
                   help="comma separated grammar names applied in turn")
    p.add_argument("--policy", choices=("vertices", "branches"), default="vertices")
    p.add_argument("--branches", type=int, default=None, help="3-star ceiling for the branches policy")
    p.add_argument("--max-steps", type=int, default=None, help="ceiling on grammar applications")
    p.add_argument("--candidate-iter", type=int, default=20)
    _add_moduli(p)
    leaves.append(p)
    p = fsub.add_parser("polyline", help="polygonal line principal curve")
    p.add_argument("--lam-prime", type=float, default=0.13)
    p.add_argument("--beta", type=float, default=0.3)
    p.add_argument("--max-segments", type=int, default=200)
    leaves.append(p)
    p = fsub.add_parser("complex", help="principal cubic complex by factor-wise growth")
    p.add_argument("--r", type=int, default=2, help="number of factors")
    p.add_argument("--nodes", type=int, default=6, help="vertex ceiling per factor")
    p.add_argument("--grammar", default="grow")
    p.add_argument("--candidate-iter", type=int, default=20)
    _add_moduli(p)
    leaves.append(p)
    for p in leaves[2:]:
        _add_input(p)
        _add_common(p)

    p = sub.add_parser("project", help="project data onto a fitted model")
    p.add_argument("--model", help="output directory of a fit run")
    _add_input(p)
    _add_common(p, seeded=False)
    leaves.append(p)

    p = sub.add_parser("layout", help="metro-map layout of a fitted tree")
    p.add_argument("--model", help="output directory of a tree fit")
    p.add_argument("--local-plane", action="store_true",
                   help="order each star on the principal plane of its own points")
    _add_input(p)
    _add_common(p, seeded=False)
    leaves.append(p)

    p = sub.add_parser("report", help="print the metrics of a run")
    p.add_argument("--model", help="output directory of a run")
    p.set_defaults(_seeded=False)
    leaves.append(p)
    return parser, leaves


def _apply_config(path, leaves):
    cfg = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        cfg.read_file(fh)
    section = cfg["prinobj"] if cfg.has_section("prinobj") else cfg[cfg.default_section]
    values = {k.replace("-", "_"): v for k, v in section.items()}
    for p in leaves:
        for action in p._actions:
            raw = values.get(action.dest)
            if raw is None:
                continue
            if isinstance(action, argparse._StoreTrueAction):
                try:
                    action.default = configparser.ConfigParser.BOOLEAN_STATES[raw.lower()]
                except KeyError:
                    raise CliError(f"{action.dest} must be a boolean, got {raw!r}") from None
            else:
                action.default = action.type(raw) if action.type else raw


def parse_args(argv):
    parser, leaves = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        _apply_config(known.config, leaves)
    args = parser.parse_args(argv)
    if args.command is None or (args.command in ("ingest", "fit") and args.kind is None):
        raise CliError("a command is required; see --help")
    return args


# ----------------------------------------------------------------- helpers


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects the outputs of one invocation and writes the manifest."""

    def __init__(self, args):
        self.args = args
        self.out = args.out
        self.inputs = {}
        self.outputs = []
        if self.out is None:
            raise CliError("--out is required")
        os.makedirs(self.out, exist_ok=True)

    def note_input(self, path):
        if path == BUILTIN_IRIS:
            data = resources.files("principal_objects").joinpath("data/iris.csv").read_bytes()
            self.inputs[path] = hashlib.sha256(data).hexdigest()
        else:
            self.inputs[path] = _sha256(path)

    def write(self, name, content):
        data = content.encode("utf-8") if isinstance(content, str) else content
        with open(os.path.join(self.out, name), "wb") as fh:
            fh.write(data)
        self.outputs.append(name)

    def write_json(self, name, obj):
        self.write(name, json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n")

    def finish(self):
        config = {k: v for k, v in sorted(vars(self.args).items())
                  if not k.startswith("_") and k not in ("out", "log_level")}
        manifest = {
            "command": " ".join(filter(None, [self.args.command, getattr(self.args, "kind", None)])),
            "config": config,
            "seed": getattr(self.args, "seed", None),
            "version": __version__,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
        }
        self.write_json("manifest.json", manifest)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def _load_input(args, run):
    path = args.input
    if path is None:
        raise CliError("--input is required")
    run.note_input(path)
    if path == BUILTIN_IRIS:
        source = resources.files("principal_objects").joinpath("data/iris.csv").read_bytes()
        return read_table(source, header=True, label_column="species")
    return read_table(path, delimiter=args.delimiter, gap_token=args.gap_token,
                      header=args.header, weight_column=args.weight_column,
                      label_column=args.label_column)


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _read_manifest(model_dir):
    with open(os.path.join(model_dir, "manifest.json"), encoding="utf-8") as fh:
        return json.load(fh)


def _read_text(model_dir, name):
    with open(os.path.join(model_dir, name), encoding="utf-8") as fh:
        return fh.read()


def _trace_table(rows, columns):
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(repr(float(r[c])) if isinstance(r[c], float) else str(r[c])
                              for c in columns))
    return "\n".join(lines) + "\n"


def _energy_rows(trace, **extra):
    out = []
    for i, e in enumerate(trace):
        row = dict(extra)
        row.update(iteration=i, approx=e.approx, stretching=e.stretching, bending=e.bending,
                   total=e.total)
        out.append(row)
    return out


_ENERGY_COLUMNS = ["iteration", "approx", "stretching", "bending", "total"]


# ---------------------------------------------------------------- commands


def cmd_ingest_table(args, run):
    table = _load_input(args, run)
    X = table.data
    run.write("table.csv", dumps_table(X.values, X.gaps, table.columns, table.labels))
    if not np.all(X.weights == 1):
        run.write("weights.csv", "\n".join(repr(float(w)) for w in X.weights) + "\n")
    run.write_json("metrics.json", {"rows": X.n, "columns": X.m,
                                    "gaps": int(X.gaps.sum())})


def cmd_ingest_triplets(args, run):
    if args.fasta is None:
        raise CliError("--fasta is required")
    run.note_input(args.fasta)
    with open(args.fasta, encoding="utf-8") as fh:
        seq = read_fasta(fh)
    X = triplet_frequencies(seq, args.width, args.fragments, np.random.default_rng(args.seed))
    run.write("table.csv", dumps_table(X.values, header=TRIPLETS))
    run.write_json("metrics.json", {"rows": X.n, "columns": X.m, "sequence_length": len(seq),
                                    "max_row_sum_error": float(np.abs(X.values.sum(axis=1) - 1).max())})


def cmd_fit_pca(args, run):
    table = _load_input(args, run)
    X = table.data
    basis = fit_components(X, args.k, eps=args.eps, rng=np.random.default_rng(args.seed))
    scores = project_to_basis(X, basis)
    total = total_variance(X)
    run.write("basis.txt", dumps_basis(basis))
    run.write("projections.csv", dumps_table(scores, header=[f"pc{j + 1}" for j in range(basis.k)],
                                             labels=table.labels))
    run.write_json("metrics.json", {
        "eigenvalues": basis.eigenvalues, "total_variance": total,
        "explained_ratio": basis.eigenvalues / total if total > 0 else basis.eigenvalues * 0,
        "converged": basis.converged, "rank_deficient": basis.rank_deficient,
        "near_degenerate": list(basis.near_degenerate)})


def cmd_fit_kmeans(args, run):
    table = _load_input(args, run)
    X = table.data
    res = fit_kmeans(X, args.k, seeding=args.seeding, rng=np.random.default_rng(args.seed),
                     max_iter=args.max_iter)
    _, d2 = nearest(X, res.centroids)
    run.write("centroids.txt", dumps_points(res.centroids, "centroids 1"))
    run.write("assignment.csv", _assignment_table(res.partition.assignment, d2))
    run.write("trace.csv", "iteration,distortion\n" + "".join(
        f"{i},{d!r}\n" for i, d in enumerate(res.distortion_trace)))
    run.write_json("metrics.json", {"distortion": res.distortion, "converged": res.converged,
                                    "iterations": res.n_iter, "counts": res.partition.counts})


def _assignment_table(assignment, d2, name="vertex"):
    lines = [f"row,{name},distance"]
    lines += [f"{i},{int(a)},{math.sqrt(max(float(d), 0.0))!r}"
              for i, (a, d) in enumerate(zip(assignment, d2))]
    return "\n".join(lines) + "\n"


def cmd_fit_elastic_map(args, run):
    table = _load_input(args, run)
    X = table.data
    shape = _ints(args.shape)
    net = make_elastic_net(args.dim, shape, args.topology)
    schedule = SofteningSchedule(_floats(args.multipliers), args.lam, args.mu)
    model = fit_elastic_map(X, net, schedule, rng=np.random.default_rng(args.seed),
                            resolution_scaling=args.resolution_scaling)
    run.write("map.txt", dumps_map_model(model))
    run.write("projection.csv", _map_projection_table(X, model))
    rows = []
    for epoch, tr in enumerate(model.epoch_traces):
        rows += _energy_rows(tr, epoch=epoch)
    run.write("trace.csv", _trace_table(rows, ["epoch"] + _ENERGY_COLUMNS))
    final = model.epoch_traces[-1][-1]
    run.write_json("metrics.json", {"energy": final.as_dict(), "vertices": net.graph.n_vertices,
                                    "lam": model.lam, "mu": model.mu})


def _map_projection_table(X, model):
    internal, _, dist = project_dataset(X, model)
    cols = [f"u{j + 1}" for j in range(internal.shape[1])] + ["distance"]
    return dumps_table(np.hstack([internal, dist[:, None]]), header=cols)


def _grammar_sequence(text):
    try:
        return tuple(NAMED_GRAMMARS[g.strip()] for g in str(text).split(",") if g.strip())
    except KeyError as exc:
        raise CliError(f"unknown grammar {exc.args[0]!r}") from None


def _write_growth(run, X, graph, phi, log_records, energy, extra=None):
    part = partition_by_vertices(X, phi)
    _, d2 = nearest(X, phi)
    run.write("embedding.txt", dumps_points(phi, "embedding 1"))
    run.write("growth_log.jsonl", dumps_log(log_records))
    run.write("assignment.csv", _assignment_table(part.assignment, d2))
    metrics = {"energy": energy.as_dict(), "vertices": graph.n_vertices,
               "edges": graph.n_edges, "steps": len(log_records),
               "star_orders": {str(k): v for k, v in sorted(graph.star_orders().items())}}
    metrics.update(extra or {})
    run.write_json("metrics.json", metrics)


def cmd_fit_tree(args, run):
    table = _load_input(args, run)
    X = table.data
    if args.policy == "branches":
        if args.branches is None:
            raise CliError("--branches is required with --policy branches")
        # the branch ceiling alone does not bound chain growth
        cc = args.max_steps if args.max_steps is not None else args.nodes
        budget = ComplexityBudget("branches", args.branches, cc)
    else:
        cc = args.max_steps if args.max_steps is not None else math.inf
        budget = ComplexityBudget("vertices", args.nodes, cc)
    res = grow_principal_graph(X, _grammar_sequence(args.grammar), budget,
                               Moduli(args.lam, args.mu), candidate_iter=args.candidate_iter,
                               rng=np.random.default_rng(args.seed))
    run.write("graph.txt", dumps_graph(res.graph))
    _write_growth(run, X, res.graph, res.embedding, res.log, res.energy,
                  {"is_tree": res.graph.is_tree()})


def cmd_fit_polyline(args, run):
    table = _load_input(args, run)
    X = table.data
    params = PolylineParams(args.lam_prime, args.beta, args.max_segments)
    res = fit_polyline(X, params, rng=np.random.default_rng(args.seed))
    part = partition_polyline(X, res.curve)
    run.write("curve.txt", dumps_curve(res.curve))
    run.write("partition.csv", _polyline_table(part))
    run.write("trace.csv", _trace_table(res.trace, ["k", "lambda", "msd", "penalized", "threshold"]))
    run.write_json("metrics.json", {"segments": res.curve.k, "msd": res.trace[-1]["msd"],
                                    "initial_msd": res.trace[0]["msd"], "radius": res.radius})


def _polyline_table(part):
    lines = ["row,entity,kind,index,t,distance"]
    for i, (e, t, d) in enumerate(zip(part.entity, part.t, part.sqdist)):
        kind = "segment" if e % 2 else "vertex"
        lines.append(f"{i},{int(e)},{kind},{int(e) // 2},{float(t)!r},"
                     f"{math.sqrt(max(float(d), 0.0))!r}")
    return "\n".join(lines) + "\n"


def cmd_fit_complex(args, run):
    table = _load_input(args, run)
    X = table.data
    res = grow_product(X, None, _grammar_sequence(args.grammar),
                       ComplexityBudget("vertices", args.nodes), Moduli(args.lam, args.mu),
                       candidate_iter=args.candidate_iter,
                       rng=np.random.default_rng(args.seed), r=args.r)
    run.write("complex.txt", dumps_complex(res.complex))
    _write_growth(run, X, res.complex.graph, res.embedding, res.log, res.energy,
                  {"factor_sizes": list(res.complex.sizes)})


def cmd_project(args, run):
    if args.model is None:
        raise CliError("--model is required")
    manifest = _read_manifest(args.model)
    kind = manifest["command"]
    table = _load_input(args, run)
    X = table.data
    if kind == "fit pca":
        basis = loads_basis(_read_text(args.model, "basis.txt"))
        scores = project_to_basis(X, basis)
        out = dumps_table(scores, header=[f"pc{j + 1}" for j in range(basis.k)],
                          labels=table.labels)
    elif kind == "fit kmeans":
        y = loads_points(_read_text(args.model, "centroids.txt"), "centroids 1")
        idx, d2 = nearest(X, y)
        out = _assignment_table(idx, d2, "cluster")
    elif kind == "fit elastic-map":
        out = _map_projection_table(X, loads_map_model(_read_text(args.model, "map.txt")))
    elif kind in ("fit tree", "fit complex"):
        phi = loads_points(_read_text(args.model, "embedding.txt"), "embedding 1")
        idx, d2 = nearest(X, phi)
        out = _assignment_table(idx, d2)
    elif kind == "fit polyline":
        curve = loads_curve(_read_text(args.model, "curve.txt"))
        out = _polyline_table(partition_polyline(X, curve))
    else:
        raise CliError(f"cannot project onto the output of {kind!r}")
    run.write("projection.csv", out)


def cmd_layout(args, run):
    if args.model is None:
        raise CliError("--model is required")
    manifest = _read_manifest(args.model)
    if manifest["command"] not in ("fit tree",):
        raise CliError("layout needs the output of 'fit tree'")
    graph = loads_graph(_read_text(args.model, "graph.txt"))
    phi = loads_points(_read_text(args.model, "embedding.txt"), "embedding 1")
    pies = part = X = None
    basis = None
    if args.input is not None:
        table = _load_input(args, run)
        X = table.data
        basis = fit_components(X, min(2, X.m, X.n - 1), rng=0)
        part = partition_by_vertices(X, phi)
        if table.labels is not None:
            pies = pie_statistics(part, table.labels)
        else:
            pies = pie_statistics(part, ["all"] * X.n)
    lay = layout_metro_map(graph, phi, basis, local_plane=args.local_plane, X=X, partition=part)
    run.write("layout.json", dumps_layout(lay, pies))
    run.write("metro.svg", emit_svg(lay, pies))


def cmd_report(args):
    if args.model is None:
        raise CliError("--model is required")
    manifest = _read_manifest(args.model)
    metrics = json.loads(_read_text(args.model, "metrics.json"))
    print(f"command: {manifest['command']}")
    print(f"seed: {manifest['seed']}")
    print(f"version: {manifest['version']}")
    for path, digest in sorted(manifest["inputs"].items()):
        print(f"input: {path} sha256={digest}")
    for key, value in sorted(metrics.items()):
        print(f"{key}: {json.dumps(value, sort_keys=True)}")


COMMANDS = {
    ("ingest", "table"): cmd_ingest_table,
    ("ingest", "triplets"): cmd_ingest_triplets,
    ("fit", "pca"): cmd_fit_pca,
    ("fit", "kmeans"): cmd_fit_kmeans,
    ("fit", "elastic-map"): cmd_fit_elastic_map,
    ("fit", "tree"): cmd_fit_tree,
    ("fit", "polyline"): cmd_fit_polyline,
    ("fit", "complex"): cmd_fit_complex,
    ("project", None): cmd_project,
    ("layout", None): cmd_layout,
}


def run(argv=None):
    args = parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "report":
        cmd_report(args)
        return 0
    if args._seeded and args.seed is None:
        raise InvariantViolation("--seed is mandatory for stochastic methods")
    handler = COMMANDS[(args.command, getattr(args, "kind", None))]
    r = Run(args)
    handler(args, r)
    r.finish()
    return 0


def main(argv=None):
    try:
        return run(argv)
    except PrincipalError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, CliError) else 1
    except OSError as exc:
        print(f"error: io-error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: invalid-argument: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
