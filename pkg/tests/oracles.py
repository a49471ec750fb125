"""Independent reference implementations used to validate the library.

Everything here is deliberately written the slow, obvious way (per-item
loops, pair enumeration, exhaustive search, first-order optimization) and
shares no code with the implementations under test.
"""

from __future__ import annotations

import itertools
from collections import Counter
from math import comb, log

import numpy as np


# ---------------------------------------------------------------------------
# Steepest descent with exact line search on the autoencoder objective.
# The objective is quadratic in W, so the exact step size along the negative
# gradient has a closed form and convergence to the global optimum is
# guaranteed.


def sae_gd_objective(x: np.ndarray, s: np.ndarray, lam: float,
                     max_iter: int = 5000, rel_tol: float = 1e-13) -> float:
    def objective(w):
        r1 = x - w.T @ s
        r2 = w @ x - s
        return float(np.sum(r1 * r1) + lam * np.sum(r2 * r2))

    def gradient(w):
        return 2.0 * ((s @ s.T) @ w + lam * w @ (x @ x.T) - (1.0 + lam) * (s @ x.T))

    def hessian_apply(g):
        return 2.0 * ((s @ s.T) @ g + lam * g @ (x @ x.T))

    w = np.zeros((s.shape[0], x.shape[0]))
    value = objective(w)
    for _ in range(max_iter):
        g = gradient(w)
        gg = float(np.sum(g * g))
        if gg == 0.0:
            break
        curvature = float(np.sum(g * hessian_apply(g)))
        step = gg / curvature
        w = w - step * g
        new_value = objective(w)
        if value - new_value < rel_tol * max(1.0, abs(value)):
            value = new_value
            break
        value = new_value
    return value


# ---------------------------------------------------------------------------
# Central finite differences.


def central_diff(fn, arrays: list[np.ndarray], step: float = 1e-5) -> list[np.ndarray]:
    """Gradient of scalar fn(arrays) w.r.t. every array, by central differences."""
    grads = []
    for idx, arr in enumerate(arrays):
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = fn(arrays)
            flat[i] = orig - step
            down = fn(arrays)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / denom


# ---------------------------------------------------------------------------
# Clustering metric references.


def bcubed_reference(pred, true) -> tuple[float, float, float]:
    n = len(pred)
    precisions, recalls = [], []
    for i in range(n):
        cluster = [j for j in range(n) if pred[j] == pred[i]]
        klass = [j for j in range(n) if true[j] == true[i]]
        overlap = len([j for j in cluster if true[j] == true[i]])
        precisions.append(overlap / len(cluster))
        recalls.append(overlap / len(klass))
    p = sum(precisions) / n
    r = sum(recalls) / n
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f


def v_measure_reference(pred, true) -> tuple[float, float, float]:
    n = len(pred)

    def entropy(labels):
        return -sum((c / n) * log(c / n) for c in Counter(labels).values())

    def conditional(target, given):
        h = 0.0
        for g in set(given):
            idx = [i for i in range(n) if given[i] == g]
            sub = [target[i] for i in idx]
            for c in Counter(sub).values():
                h -= (c / n) * log(c / len(idx))
        return h

    h_true, h_pred = entropy(true), entropy(pred)
    hom = 1.0 if h_true == 0 else 1.0 - conditional(true, pred) / h_true
    comp = 1.0 if h_pred == 0 else 1.0 - conditional(pred, true) / h_pred
    v = 0.0 if hom + comp == 0 else 2 * hom * comp / (hom + comp)
    return hom, comp, v


def ari_reference(pred, true) -> float:
    """Pair-enumeration adjusted Rand index (same degenerate convention:
    a trivial partition on either side scores 1.0)."""
    n = len(pred)
    if len(set(pred)) == 1 or len(set(true)) == 1:
        return 1.0
    same_both = same_pred = same_true = 0
    for i, j in itertools.combinations(range(n), 2):
        sp = pred[i] == pred[j]
        st = true[i] == true[j]
        same_pred += sp
        same_true += st
        same_both += sp and st
    total = comb(n, 2)
    expected = same_pred * same_true / total
    maximum = (same_pred + same_true) / 2
    if maximum == expected:
        return 1.0
    return (same_both - expected) / (maximum - expected)


def purity_reference(pred, true) -> float:
    total = 0
    for cluster in set(pred):
        members = [true[i] for i in range(len(pred)) if pred[i] == cluster]
        total += Counter(members).most_common(1)[0][1]
    return total / len(pred)


def hungarian_reference(cost: np.ndarray) -> float:
    """Exhaustive minimum assignment cost over all permutations."""
    cost = np.asarray(cost, dtype=np.float64)
    k, m = cost.shape
    if k <= m:
        return min(
            sum(cost[r, perm[r]] for r in range(k))
            for perm in itertools.permutations(range(m), k)
        )
    return hungarian_reference(cost.T)


def kmeans_exhaustive_inertia(points: np.ndarray, k: int) -> float:
    """Best inertia over every assignment of n points to at most k clusters."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    best = np.inf
    for assign in itertools.product(range(k), repeat=n):
        inertia = 0.0
        for c in range(k):
            members = points[[i for i in range(n) if assign[i] == c]]
            if len(members):
                centroid = members.mean(axis=0)
                inertia += float(np.sum((members - centroid) ** 2))
        best = min(best, inertia)
    return best


def gaussian_posterior_reference(point, weights, means, covs) -> np.ndarray:
    """Direct-density Bayes posterior for one point."""
    dens = []
    point = np.asarray(point, dtype=np.float64)
    for w, mu, cov in zip(weights, means, covs):
        d = len(mu)
        diff = point - mu
        quad = float(diff @ np.linalg.inv(cov) @ diff)
        norm = (2 * np.pi) ** (-d / 2) * np.linalg.det(cov) ** -0.5
        dens.append(w * norm * np.exp(-0.5 * quad))
    dens = np.asarray(dens)
    return dens / dens.sum()
