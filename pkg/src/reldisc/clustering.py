"""From-scratch clustering primitives: K-Means with k-means++ seeding, and
full-covariance Gaussian mixture EM.

Determinism rules used throughout: all randomness flows from an explicit seed,
and every tie (nearest centroid, farthest point, argmax posterior) is broken
by the lowest index.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp


class ClusteringError(ValueError):
    """Invalid clustering request (e.g. fewer points than components)."""


class ComponentCollapseWarning(RuntimeWarning):
    """A mixture component degenerated to the covariance regularization floor."""


@dataclass
class KMeansResult:
    centroids: np.ndarray          # (k, d)
    assignments: np.ndarray        # (n,) int
    inertia: float
    n_iter: int
    inertia_trace: list[float] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "centroids": self.centroids.tolist(),
            "assignments": self.assignments.tolist(),
            "inertia": self.inertia,
            "n_iter": self.n_iter,
        }


@dataclass
class GmmModel:
    k: int
    weights: np.ndarray            # (k,)
    means: np.ndarray              # (k, d)
    covariances: np.ndarray        # (k, d, d)
    log_likelihood_trace: list[float]
    reg: float
    converged: bool
    collapsed: bool

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "log_likelihood_trace": list(self.log_likelihood_trace),
            "reg": self.reg,
            "converged": self.converged,
            "collapsed": self.collapsed,
        }


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) matrix of squared euclidean distances via the expanded product."""
    p2 = np.einsum("nd,nd->n", points, points)[:, None]
    c2 = np.einsum("kd,kd->k", centroids, centroids)[None, :]
    out = p2 + c2 - 2.0 * (points @ centroids.T)
    np.maximum(out, 0.0, out=out)
    return out


def kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seed k centroids: first uniform, the rest proportional to squared
    distance from the nearest chosen centroid."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    for i in range(1, k):
        dist_sq = _squared_distances(points, centroids[:i]).min(axis=1)
        total = dist_sq.sum()
        if total <= 0.0:
            # All points coincide with chosen centroids; any choice is equivalent.
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=dist_sq / total))
        centroids[i] = points[idx]
    return centroids


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dist_sq = _squared_distances(points, centroids)
    labels = np.argmin(dist_sq, axis=1)  # argmin takes the lowest index on ties
    return labels, dist_sq


def kmeans(points: np.ndarray, k: int, seed: int, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm with k-means++ initialization.

    Empty clusters are re-seeded with the point farthest from its assigned
    centroid.  Iterations stop once assignments are stable.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise ClusteringError("points must be a non-empty (n, d) array")
    n = points.shape[0]
    if k < 1:
        raise ClusteringError("k must be >= 1")
    if k > n:
        raise ClusteringError(f"k={k} exceeds point count n={n}")

    rng = np.random.default_rng(seed)
    centroids = kmeans_plusplus(points, k, rng)
    labels, dist_sq = _assign(points, centroids)
    trace: list[float] = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        point_cost = dist_sq[np.arange(n), labels]
        trace.append(float(point_cost.sum()))
        new_centroids = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        for c in range(k):
            if counts[c] > 0:
                new_centroids[c] = points[labels == c].mean(axis=0)
        # Re-seed empties with the farthest point, lowest index on ties.
        if np.any(counts == 0):
            cost = point_cost.copy()
            for c in np.flatnonzero(counts == 0):
                far = int(np.argmax(cost))
                new_centroids[c] = points[far]
                cost[far] = -np.inf
        new_labels, dist_sq = _assign(points, new_centroids)
        centroids = new_centroids
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    inertia = float(dist_sq[np.arange(n), labels].sum())
    trace.append(inertia)
    return KMeansResult(
        centroids=centroids, assignments=labels, inertia=inertia, n_iter=n_iter,
        inertia_trace=trace,
    )


def _hard_responsibilities(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """One-hot responsibilities from a k-means++ hard assignment.

    Components that end up empty steal the globally farthest point so every
    component starts with mass.
    """
    n = points.shape[0]
    centroids = kmeans_plusplus(points, k, rng)
    labels, dist_sq = _assign(points, centroids)
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        cost = dist_sq[np.arange(n), labels].copy()
        for c in np.flatnonzero(counts == 0):
            far = int(np.argmax(cost))
            labels[far] = c
            cost[far] = -np.inf
    resp = np.zeros((n, k))
    resp[np.arange(n), labels] = 1.0
    return resp


def _log_gaussians(points: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """(n, k) log densities of each point under each full-covariance Gaussian."""
    n, d = points.shape
    k = means.shape[0]
    out = np.empty((n, k))
    for i in range(k):
        chol = np.linalg.cholesky(covs[i])
        diff = points - means[i]
        # Solve L z = diff^T so that mahalanobis = ||z||^2.
        z = np.linalg.solve(chol, diff.T)
        maha = np.einsum("dn,dn->n", z, z)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        out[:, i] = -0.5 * (d * np.log(2.0 * np.pi) + logdet + maha)
    return out


def _m_step(
    points: np.ndarray, resp: np.ndarray, reg: float,
    prev_means: np.ndarray | None, prev_covs: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, d = points.shape
    k = resp.shape[1]
    mass = resp.sum(axis=0)
    weights = mass / n
    means = np.empty((k, d))
    covs = np.empty((k, d, d))
    for i in range(k):
        if mass[i] < 10 * np.finfo(np.float64).tiny:
            # Dead component: freeze previous parameters, weight stays ~0.
            means[i] = prev_means[i] if prev_means is not None else points.mean(axis=0)
            covs[i] = prev_covs[i] if prev_covs is not None else reg * np.eye(d)
            continue
        means[i] = resp[:, i] @ points / mass[i]
        diff = points - means[i]
        covs[i] = (resp[:, i] * diff.T) @ diff / mass[i] + reg * np.eye(d)
    return weights, means, covs


def _floor_is_binding(covs: np.ndarray, reg: float) -> bool:
    """True when some component's data covariance sits at the regularization floor."""
    for cov in covs:
        eigvals = np.linalg.eigvalsh(cov)
        if eigvals.min() <= reg * (1.0 + 1e-6):
            return True
    return False


def fit_gmm(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-4,
    reg: float = 1e-6,
) -> GmmModel:
    """EM for a full-covariance Gaussian mixture.

    Responsibilities are initialized from a k-means++ hard assignment; each
    M-step adds ``reg * I`` to every covariance; iteration stops when the mean
    log-likelihood improves by less than ``tol``.  The per-iteration mean
    log-likelihood is recorded in the trace.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ClusteringError("points must be (n, d)")
    n, d = points.shape
    if not 1 <= k <= n:
        raise ClusteringError(f"need n >= k >= 1 (got n={n}, k={k})")

    rng = np.random.default_rng(seed)
    resp = _hard_responsibilities(points, k, rng)
    weights, means, covs = _m_step(points, resp, reg, None, None)

    trace: list[float] = []
    converged = False
    prev_ll = -np.inf
    for _ in range(max_iter):
        with np.errstate(divide="ignore"):
            log_joint = _log_gaussians(points, means, covs) + np.log(weights)[None, :]
        log_norm = logsumexp(log_joint, axis=1)
        ll = float(np.mean(log_norm))
        trace.append(ll)
        resp = np.exp(log_joint - log_norm[:, None])
        if ll - prev_ll < tol:
            converged = True
            break
        prev_ll = ll
        weights, means, covs = _m_step(points, resp, reg, means, covs)

    collapsed = bool(np.any(weights < 10 * np.finfo(np.float64).tiny)) or _floor_is_binding(covs, reg)
    if collapsed:
        warnings.warn(
            "a mixture component collapsed to the covariance regularization floor",
            ComponentCollapseWarning,
            stacklevel=2,
        )
    return GmmModel(
        k=k, weights=weights, means=means, covariances=covs,
        log_likelihood_trace=trace, reg=reg, converged=converged, collapsed=collapsed,
    )


def gmm_posteriors(model: GmmModel, points: np.ndarray) -> np.ndarray:
    """(n, k) responsibility matrix P(component | point), computed in log space."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != model.means.shape[1]:
        raise ClusteringError(
            f"points must be (n, {model.means.shape[1]}), got {points.shape}"
        )
    with np.errstate(divide="ignore"):
        log_joint = _log_gaussians(points, model.means, model.covariances) \
            + np.log(model.weights)[None, :]
    log_norm = logsumexp(log_joint, axis=1)
    return np.exp(log_joint - log_norm[:, None])
