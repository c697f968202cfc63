"""Time the compiled kernels against the numpy fallback.

Run from the repository root after building the extension::

    python benchmarks/bench_kernels.py [--rows 20000] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from principal_objects import _pykernels, kernels

try:
    from principal_objects import _ckernels
except ImportError:
    _ckernels = None


def _inputs(rng, n, m, k, gap_rate=0.1):
    values = rng.normal(size=(n, m))
    gaps = rng.random((n, m)) < gap_rate
    gaps[:, 0] = False
    values[gaps] = 0.0
    points = rng.normal(size=(k, m))
    weights = rng.uniform(0.5, 2.0, n)
    assign = rng.integers(0, k, n)
    return values, gaps, points, weights, assign


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=20_000)
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--points", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    values, gaps, points, weights, assign = _inputs(rng, args.rows, args.dim, args.points)
    curve = np.cumsum(rng.normal(size=(args.points, args.dim)), axis=0)
    cases = {
        "nearest_point": lambda impl: kernels.nearest_point(values, gaps, points, impl=impl),
        "polyline_partition": lambda impl: kernels.polyline_partition(values, gaps, curve,
                                                                      impl=impl),
        "cluster_sums": lambda impl: kernels.cluster_sums(values, gaps, weights, assign,
                                                          args.points, impl=impl),
    }
    impls = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"rows={args.rows} dim={args.dim} points={args.points} default={kernels.BACKEND}")
    print(f"{'kernel':<20}" + "".join(f"{name:>12}" for name, _ in impls) + f"{'speedup':>10}")
    for label, fn in cases.items():
        best = [min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat))
                for _, impl in impls]
        ratio = f"{best[0] / best[-1]:>9.1f}x" if len(best) > 1 else f"{'n/a':>10}"
        print(f"{label:<20}" + "".join(f"{t * 1e3:>10.1f}ms" for t in best) + ratio)


if __name__ == "__main__":
    main()
