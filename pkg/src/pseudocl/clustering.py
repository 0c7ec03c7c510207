"""Clustering backends: Lloyd K-means (default), diagonal GMM, and PCA."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ClusterResult:
    centroids: np.ndarray          # (k, d)
    assignments: np.ndarray        # (n,) int
    objective: float               # mean squared distance to assigned centroid
    iterations: int
    converged: bool
    objective_trace: list[float] = field(default_factory=list)


@dataclass
class GmmResult:
    means: np.ndarray              # (k, d)
    variances: np.ndarray          # (k, d), diagonal covariances
    weights: np.ndarray            # (k,)
    assignments: np.ndarray        # argmax responsibilities
    log_likelihood: float
    ll_trace: list[float] = field(default_factory=list)


@dataclass
class PcaBasis:
    components: np.ndarray         # (d_out, d), orthonormal rows
    mean: np.ndarray               # (d,)
    explained_variance: np.ndarray  # (d_out,), non-increasing


def _validate_points(points: np.ndarray, k: int) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim != 2:
        raise ValueError("points must be a 2-D array")
    if k < 1:
        raise ValueError("k must be >= 1")
    if x.shape[0] < k:
        raise ValueError(f"{x.shape[0]} points cannot form {k} clusters")
    if not np.all(np.isfinite(x)):
        raise ValueError("points contain non-finite values")
    return x


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    idx = int(rng.integers(n))
    centroids[0] = x[idx]
    d2 = np.sum((x - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total == 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centroids[j]) ** 2, axis=1))
    return centroids


def _assign(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = np.sum((x[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    return np.argmin(d2, axis=1)


def _objective(x: np.ndarray, centroids: np.ndarray,
               assignments: np.ndarray) -> float:
    diff = x - centroids[assignments]
    return float(np.mean(np.sum(diff * diff, axis=1)))


def _kmeans_single(x: np.ndarray, k: int, seed: int, max_iter: int,
                   tol: float) -> ClusterResult:
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(x, k, rng)
    assignments = _assign(x, centroids)
    trace: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new_centroids = centroids.copy()
        for j in range(k):
            mask = assignments == j
            if np.any(mask):
                new_centroids[j] = x[mask].mean(axis=0)
        # empty-cluster repair: seed each empty cluster with the point
        # currently farthest from its own centroid (lowest index on ties)
        for j in range(k):
            if not np.any(assignments == j):
                dists = np.sum((x - new_centroids[assignments]) ** 2, axis=1)
                far = int(np.argmax(dists))
                new_centroids[j] = x[far]
                assignments[far] = j
        new_assignments = _assign(x, new_centroids)
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        assignments = new_assignments
        trace.append(_objective(x, centroids, assignments))
        if shift < tol:
            converged = True
            break
    return ClusterResult(centroids, assignments,
                         trace[-1] if trace else _objective(x, centroids, assignments),
                         it, converged, trace)


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 300,
           tol: float = 1e-6, n_restarts: int = 1) -> ClusterResult:
    """Lloyd iterations from k-means++ init; deterministic given seed."""
    x = _validate_points(points, k)
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    best: ClusterResult | None = None
    for r in range(n_restarts):
        res = _kmeans_single(x, k, seed + r, max_iter, tol)
        if best is None or res.objective < best.objective:
            best = res
    return best  # type: ignore[return-value]


def _log_gaussian_diag(x: np.ndarray, means: np.ndarray,
                       variances: np.ndarray) -> np.ndarray:
    # (n, k) log densities
    n, d = x.shape
    out = np.empty((n, means.shape[0]))
    for j in range(means.shape[0]):
        diff = x - means[j]
        out[:, j] = -0.5 * (np.sum(diff * diff / variances[j], axis=1)
                            + np.sum(np.log(2.0 * np.pi * variances[j])))
    return out


def gmm_em(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 100,
           tol: float = 1e-7, var_floor: float = 1e-6) -> GmmResult:
    """Diagonal-covariance EM initialised from a k-means run."""
    x = _validate_points(points, k)
    if var_floor <= 0:
        raise ValueError("var_floor must be positive")
    n, d = x.shape
    km = kmeans(x, k, seed=seed)
    means = km.centroids.copy()
    variances = np.empty((k, d))
    weights = np.empty(k)
    for j in range(k):
        mask = km.assignments == j
        weights[j] = max(mask.sum(), 1) / n
        if mask.sum() > 0:
            variances[j] = np.maximum(x[mask].var(axis=0), var_floor)
        else:
            variances[j] = np.maximum(x.var(axis=0), var_floor)
    weights /= weights.sum()

    ll_trace: list[float] = []
    resp = None
    for _ in range(max_iter):
        log_dens = _log_gaussian_diag(x, means, variances) + np.log(weights)
        mx = np.max(log_dens, axis=1, keepdims=True)
        log_norm = mx[:, 0] + np.log(np.sum(np.exp(log_dens - mx), axis=1))
        ll = float(np.mean(log_norm))
        resp = np.exp(log_dens - log_norm[:, None])
        if ll_trace and abs(ll - ll_trace[-1]) < tol:
            ll_trace.append(ll)
            break
        ll_trace.append(ll)
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        weights = nk / n
        means = (resp.T @ x) / nk[:, None]
        for j in range(k):
            diff = x - means[j]
            variances[j] = np.maximum(
                (resp[:, j] @ (diff * diff)) / nk[j], var_floor)
    assignments = np.argmax(resp, axis=1)
    return GmmResult(means, variances, weights, assignments, ll_trace[-1],
                     ll_trace)


def pca_fit(points: np.ndarray, d_out: int) -> PcaBasis:
    """Top d_out principal components via full symmetric eigendecomposition."""
    x = np.asarray(points, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least two points")
    d = x.shape[1]
    if not 1 <= d_out <= d:
        raise ValueError(f"d_out must lie in [1, {d}]")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (x.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:d_out]
    components = evecs[:, order].T
    # deterministic sign: largest-magnitude entry of each component positive
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return PcaBasis(components, mean, evals[order])


def pca_project(basis: PcaBasis, point: np.ndarray) -> np.ndarray:
    x = np.asarray(point, dtype=float)
    return (x - basis.mean) @ basis.components.T
