"""Linear principal components by alternating score/direction updates.

Each component is found by the two-step iteration

    b_i = (x_i - a0, a1) / |a1|^2          (scores)
    a1  = argmin sum_i w_i |x_i - a0 - a1 b_i|^2   (direction)

followed by renormalisation, and further components by deflation. For a row
with missing cells both the scalar product and |a1|^2 run over its present
coordinates only, and the direction update is solved coordinate by
coordinate over the rows where that coordinate is present. No covariance
matrix is formed.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import DataMatrix, mean_point
from .errors import DimensionMismatchError

log = logging.getLogger(__name__)

__all__ = [
    "PrincipalComponent",
    "PCABasis",
    "fit_first_component",
    "deflate",
    "fit_components",
    "project_to_basis",
    "total_variance",
    "direction_angle",
]

# relative eigen-gap below which the top component is reported as near-degenerate
NEAR_DEGENERATE_GAP = 1e-3


@dataclass(frozen=True, eq=False)
class PrincipalComponent:
    origin: np.ndarray
    direction: np.ndarray
    scores: np.ndarray
    eigenvalue: float
    converged: bool = True
    n_iter: int = 0
    near_degenerate: bool = False


@dataclass(frozen=True, eq=False)
class PCABasis:
    origin: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    converged: bool = True
    rank_deficient: bool = False
    near_degenerate: tuple = field(default=())

    @property
    def k(self):
        return self.components.shape[0]

    def truncate(self, k):
        return PCABasis(self.origin, self.components[:k], self.eigenvalues[:k],
                        self.converged, self.rank_deficient, self.near_degenerate[:k])


def direction_angle(a, b):
    """Sign-invariant angle between two unit vectors, accurate for tiny angles."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.dot(a, b) < 0:
        b = -b
    chord = np.linalg.norm(a - b)
    return 2.0 * math.asin(min(1.0, chord / 2.0))


def _scores(centered, present, a):
    denom = present @ (a * a)
    numer = centered @ a
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(denom > 0, numer / denom, 0.0)
    return b


def _direction_update(centered, present, weights, b):
    wb = weights * b
    numer = wb @ centered
    den = (wb * b) @ present
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, numer / den, 0.0)


def _canonical_sign(a):
    return a if a[np.argmax(np.abs(a))] >= 0 else -a


def _score_variance(weights, b):
    n = b.shape[0]
    if n < 2:
        return 0.0
    return float(np.dot(weights, b * b) / weights.sum() * n / (n - 1))


def _random_unit(rng, m):
    v = rng.standard_normal(m)
    while np.linalg.norm(v) == 0:
        v = rng.standard_normal(m)
    return v / np.linalg.norm(v)


def _iterate(centered, present, weights, a, eps, max_iter):
    for it in range(1, max_iter + 1):
        b = _scores(centered, present, a)
        new = _direction_update(centered, present, weights, b)
        norm = np.linalg.norm(new)
        if norm == 0.0:
            # no variance left along any direction reachable from a
            return a, it, True
        new = new / norm
        angle = direction_angle(a, new)
        a = new
        if angle < eps:
            return a, it, True
    return a, max_iter, False


def fit_first_component(X, eps=1e-9, rng=None, max_iter=10_000, restarts=3,
                        check_degeneracy=True):
    """First principal component of ``X`` by the score/direction iteration.

    The start direction is uniform on the unit sphere. When ``max_iter`` is
    reached the iteration restarts from a fresh direction (up to
    ``restarts`` times) and the best iterate is returned with
    ``converged=False``.
    """
    if X.n < 2:
        raise ValueError("at least two observations are required")
    if eps <= 0:
        raise ValueError("eps must be positive")
    rng = np.random.default_rng(rng)
    a0 = mean_point(X)
    present = X.present.astype(np.float64)
    centered = (X.values - a0) * present
    best = None
    total_iter = 0
    for _ in range(restarts + 1):
        a, n_iter, ok = _iterate(centered, present, X.weights,
                                 _random_unit(rng, X.m), eps, max_iter)
        total_iter += n_iter
        lam = _score_variance(X.weights, _scores(centered, present, a))
        if best is None or lam > best[1]:
            best = (a, lam, ok)
        if ok:
            best = (a, lam, ok)
            break
        log.warning("first component did not converge in %d iterations; restarting", max_iter)
    a, lam, ok = best
    a = _canonical_sign(a)
    b = _scores(centered, present, a)
    lam = _score_variance(X.weights, b)
    degenerate = False
    if check_degeneracy and X.m > 1 and lam > 0:
        degenerate = _second_eigenvalue_estimate(centered, present, X.weights, a, b, rng) \
            >= (1.0 - NEAR_DEGENERATE_GAP) * lam
    return PrincipalComponent(a0, a, b, lam, ok, total_iter, degenerate)


def _second_eigenvalue_estimate(centered, present, weights, a, b, rng, n_iter=30):
    # a few iterations on the deflated residual; underestimates the true value
    resid = (centered - np.outer(b, a)) * present
    v = _random_unit(rng, a.shape[0])
    v = v - np.dot(v, a) * a
    if np.linalg.norm(v) == 0:
        return 0.0
    v /= np.linalg.norm(v)
    for _ in range(n_iter):
        new = _direction_update(resid, present, weights, _scores(resid, present, v))
        new = new - np.dot(new, a) * a
        norm = np.linalg.norm(new)
        if norm == 0:
            return 0.0
        v = new / norm
    return _score_variance(weights, _scores(resid, present, v))


def deflate(X, pc):
    """Remove the component: x' = x - a0 - a1 * b(x). Gapped cells stay gapped."""
    if pc.direction.shape[0] != X.m:
        raise DimensionMismatchError(f"component has dimension {pc.direction.shape[0]}, data {X.m}")
    present = X.present.astype(np.float64)
    centered = (X.values - pc.origin) * present
    b = _scores(centered, present, pc.direction)
    return DataMatrix(centered - np.outer(b, pc.direction), X.gaps, X.weights)


def total_variance(X):
    """Sum of per-coordinate weighted variances (the covariance trace)."""
    a0 = mean_point(X)
    w = X.weights[:, None] * X.present
    var = (w * (X.values - a0) ** 2).sum(axis=0) / w.sum(axis=0)
    n = X.n
    return float(var.sum() * n / (n - 1)) if n > 1 else 0.0


def _orthonormalize(components):
    out = []
    for a in components:
        v = a.copy()
        for q in out:
            v -= np.dot(q, v) * q
        out.append(_canonical_sign(v / np.linalg.norm(v)))
    return np.array(out)


def fit_components(X, k, eps=1e-9, rng=None, max_iter=10_000):
    """First ``k`` principal components by repeated fit-and-deflate.

    Stops early, with ``rank_deficient=True``, when the residual variance
    falls below 1e-12 of the original total variance.
    """
    if not 1 <= k <= min(X.n - 1, X.m):
        raise ValueError(f"k must lie in [1, {min(X.n - 1, X.m)}], got {k}")
    rng = np.random.default_rng(rng)
    origin = mean_point(X)
    total = total_variance(X)
    comps, lams, flags = [], [], []
    converged = True
    rank_deficient = False
    current = X
    for _ in range(k):
        if total_variance(current) <= 1e-12 * max(total, np.finfo(float).tiny):
            rank_deficient = True
            log.info("residual variance exhausted after %d components", len(comps))
            break
        pc = fit_first_component(current, eps, rng, max_iter)
        converged &= pc.converged
        comps.append(pc.direction)
        lams.append(pc.eigenvalue)
        flags.append(pc.near_degenerate)
        current = deflate(current, pc)
    components = _orthonormalize(comps) if comps else np.zeros((0, X.m))
    return PCABasis(origin, components, np.array(lams), converged, rank_deficient, tuple(flags))


def project_to_basis(X, basis):
    """Coordinates (x - a0, a_j) of every observation on every basis vector."""
    if basis.components.shape[1] != X.m:
        raise DimensionMismatchError(
            f"basis has dimension {basis.components.shape[1]}, data {X.m}")
    centered = (X.values - basis.origin) * X.present
    return centered @ basis.components.T
