"""Closed-form semantic autoencoder: a linear projection with tied weights
whose latent axes are pinned to the known-relation one-hot vectors.

The fit minimizes  ||X - W^T S||_F^2 + lambda ||W X - S||_F^2  over the
projection matrix W (K x d), with X the d x M matrix of labeled instance
columns and S the K x M one-hot label matrix.  The stationarity condition is
the Sylvester equation

    (S S^T) W + W (lambda X X^T) = (1 + lambda) S X^T.

Because S has one-hot columns, S S^T is diagonal with per-class counts n_c,
so the equation decouples into K independent symmetric positive-definite
d x d systems  (n_c I + lambda X X^T) w_c = c_c, solved by Cholesky with a
jitter fallback.  No Schur decomposition is needed.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError


class SaeError(ValueError):
    """Invalid input to the autoencoder fit or projection."""


@dataclass
class ProjectionW:
    """Fitted projection matrix plus the class order defining its latent axes."""

    matrix: np.ndarray            # (K, d)
    lam: float
    class_order: tuple[str, ...]
    fitted: bool = False

    @property
    def k_known(self) -> int:
        return len(self.class_order)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def to_json_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "class_order": list(self.class_order),
            "shape": list(self.matrix.shape),
            "matrix": self.matrix.tolist(),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ProjectionW":
        matrix = np.asarray(obj["matrix"], dtype=np.float64)
        if list(matrix.shape) != list(obj["shape"]):
            raise SaeError("projection shape header does not match matrix")
        return cls(
            matrix=matrix,
            lam=float(obj["lambda"]),
            class_order=tuple(obj["class_order"]),
            fitted=True,
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> "ProjectionW":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def one_hot_targets(labels: Sequence[str], class_order: Sequence[str]) -> np.ndarray:
    """K x M one-hot matrix; column j encodes labels[j]."""
    index = {name: i for i, name in enumerate(class_order)}
    try:
        cols = [index[lab] for lab in labels]
    except KeyError as exc:
        raise SaeError(f"label {exc.args[0]!r} not in class order") from exc
    s = np.zeros((len(class_order), len(labels)))
    s[cols, np.arange(len(labels))] = 1.0
    return s


def sae_objective(w: np.ndarray, x: np.ndarray, s: np.ndarray, lam: float) -> float:
    """Reconstruction plus weighted encoding error for an arbitrary W."""
    recon = x - w.T @ s
    encode_err = w @ x - s
    return float(np.sum(recon * recon) + lam * np.sum(encode_err * encode_err))


def sylvester_residual(w: np.ndarray, x: np.ndarray, s: np.ndarray, lam: float) -> float:
    """Relative Frobenius residual of the stationarity equation."""
    a = s @ s.T
    b = lam * (x @ x.T)
    c = (1.0 + lam) * (s @ x.T)
    return float(np.linalg.norm(a @ w + w @ b - c) / np.linalg.norm(c))


def _solve_spd_row(gram: np.ndarray, shift: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (shift*I + gram) w = rhs with Cholesky, adding diagonal jitter on failure."""
    d = gram.shape[0]
    system = shift * np.eye(d) + gram
    jitter = 1e-10 * np.trace(system) / d
    for attempt in range(8):
        try:
            factor = cho_factor(system, lower=True)
            return cho_solve(factor, rhs)
        except LinAlgError:
            system = system + jitter * np.eye(d)
            jitter *= 10.0
    raise SaeError("projection system is singular even after jitter")


def fit_sae(
    x: np.ndarray,
    labels: Sequence[str],
    class_order: Sequence[str],
    lam: float,
    n_threads: int = 1,
    residual_tol: float = 1e-8,
) -> ProjectionW:
    """Fit the projection matrix in closed form.

    ``x`` is d x M with instances as columns; ``labels[j]`` names column j's
    relation.  The K per-class systems are independent, so they may be solved
    on ``n_threads`` worker threads without affecting the result.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] == 0:
        raise SaeError("x must be d x M with M >= 1")
    if not np.all(np.isfinite(x)):
        raise SaeError("x contains non-finite values")
    if lam <= 0:
        raise SaeError("lambda must be > 0")
    if len(labels) != x.shape[1]:
        raise SaeError("labels length must match the number of columns")

    s = one_hot_targets(labels, class_order)
    counts = s.sum(axis=1)
    if np.all(counts == 0):
        raise SaeError("no labeled instances for any class")
    gram = lam * (x @ x.T)
    c = (1.0 + lam) * (s @ x.T)
    k, d = len(class_order), x.shape[0]
    w = np.empty((k, d))

    def solve_row(i: int) -> None:
        w[i] = _solve_spd_row(gram, float(counts[i]), c[i])

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(solve_row, range(k)))
    else:
        for i in range(k):
            solve_row(i)

    residual = sylvester_residual(w, x, s, lam)
    if residual > residual_tol:
        raise SaeError(f"stationarity residual {residual:.3e} exceeds {residual_tol:.1e}")
    return ProjectionW(matrix=w, lam=float(lam), class_order=tuple(class_order), fitted=True)


def encode(w: ProjectionW, x: np.ndarray) -> np.ndarray:
    """Project columns of x (d x N) into the one-hot latent space: S = W X."""
    if not w.fitted:
        raise SaeError("projection is not fitted")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != w.dim:
        raise SaeError(f"x must have {w.dim} rows, got shape {x.shape}")
    return w.matrix @ x


def decode(w: ProjectionW, s: np.ndarray) -> np.ndarray:
    """Map latent columns back to feature space with the tied weights: X_hat = W^T S."""
    if not w.fitted:
        raise SaeError("projection is not fitted")
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != w.k_known:
        raise SaeError(f"s must have {w.k_known} rows, got shape {s.shape}")
    return w.matrix.T @ s
