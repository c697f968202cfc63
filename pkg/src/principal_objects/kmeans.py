"""Principal points by Lloyd iteration with uniform or k-means++ seeding."""

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import Partition, mean_point, nearest
from .errors import InvariantViolation

log = logging.getLogger(__name__)

__all__ = [
    "KMeansResult",
    "seed_uniform",
    "seed_kmeanspp",
    "next_center_probabilities",
    "fit_kmeans",
    "distortion",
    "partition_by_centroids",
    "cluster_means",
]


@dataclass(frozen=True, eq=False)
class KMeansResult:
    centroids: np.ndarray
    partition: Partition
    distortion_trace: tuple
    converged: bool
    n_iter: int

    @property
    def distortion(self):
        return self.distortion_trace[-1]


def _row_as_point(X, i, fill):
    # a seed drawn from a gapped row borrows the mean for its missing cells
    return np.where(X.gaps[i], fill, X.values[i])


def _check_k(X, k):
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > X.n:
        raise InvariantViolation(f"k={k} exceeds the number of observations {X.n}")


def seed_uniform(X, k, rng=None):
    """k distinct rows chosen with equal probabilities."""
    _check_k(X, k)
    rng = np.random.default_rng(rng)
    rows = rng.choice(X.n, size=k, replace=False)
    fill = mean_point(X)
    return np.array([_row_as_point(X, i, fill) for i in rows])


def next_center_probabilities(X, centers):
    """Selection probabilities D(x)/sum D for the next k-means++ center.

    D(x) is the squared distance from x to its nearest chosen center. When
    every D vanishes the rows are weighted uniformly.
    """
    _, d2 = nearest(X, np.atleast_2d(centers))
    total = d2.sum()
    if total <= 0:
        return np.full(X.n, 1.0 / X.n)
    return d2 / total


def seed_kmeanspp(X, k, rng=None, first=None):
    """k-means++ seeding: first center uniform, then D^2-proportional draws.

    ``first`` fixes the row index of the first center.
    """
    _check_k(X, k)
    rng = np.random.default_rng(rng)
    fill = mean_point(X)
    i0 = int(rng.integers(X.n)) if first is None else int(first)
    centers = [_row_as_point(X, i0, fill)]
    for _ in range(1, k):
        p = next_center_probabilities(X, np.array(centers))
        i = int(rng.choice(X.n, p=p))
        centers.append(_row_as_point(X, i, fill))
    return np.array(centers)


def partition_by_centroids(X, centroids):
    """Nearest-centroid partition; ties go to the lowest centroid index."""
    idx, _ = nearest(X, centroids)
    return Partition(idx, np.atleast_2d(centroids).shape[0])


def distortion(X, centroids):
    """Sum of w_i times the squared distance to the nearest centroid."""
    _, d2 = nearest(X, centroids)
    return float(np.dot(X.weights, d2))


def cluster_means(X, partition, previous):
    """Weighted per-coordinate means of each cluster.

    Coordinates with no present cell in a cluster keep their previous value.
    """
    sums, mass = kernels.cluster_sums(X.values, X.gaps, X.weights,
                                      partition.assignment, partition.k)
    with np.errstate(divide="ignore", invalid="ignore"):
        means = sums / mass
    return np.where(mass > 0, means, previous)


def fit_kmeans(X, k, seeding="kmeans++", rng=None, max_iter=300, init=None):
    """Lloyd iteration until the partition stops changing.

    An emptied cluster is re-seeded at the observation with the largest
    current squared distance, which keeps ``k`` fixed and cannot increase
    the distortion.
    """
    _check_k(X, k)
    rng = np.random.default_rng(rng)
    if init is not None:
        y = np.array(init, dtype=np.float64)
    elif seeding == "kmeans++":
        y = seed_kmeanspp(X, k, rng)
    elif seeding == "uniform":
        y = seed_uniform(X, k, rng)
    else:
        raise ValueError(f"unknown seeding {seeding!r}")
    idx, d2 = nearest(X, y)
    trace = [float(np.dot(X.weights, d2))]
    fill = mean_point(X)
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        part = Partition(idx, k)
        y = cluster_means(X, part, y)
        empty = np.flatnonzero(part.counts == 0)
        if empty.size:
            _, d2_now = nearest(X, y)
            order = np.argsort(-d2_now, kind="stable")
            for j, i in zip(empty, order):
                log.debug("re-seeding empty cluster %d at row %d", j, i)
                y[j] = _row_as_point(X, i, fill)
        new_idx, d2 = nearest(X, y)
        trace.append(float(np.dot(X.weights, d2)))
        if np.array_equal(new_idx, idx) and not empty.size:
            converged = True
            break
        idx = new_idx
    return KMeansResult(y, Partition(idx, k), tuple(trace), converged, n_iter)
