"""Novel-relation detection on the one-hot latent space.

Each unlabeled latent vector gets a mapping score: its best cosine similarity
against any known-relation axis.  The lowest-scoring 5% become outlier
candidates, a Gaussian mixture groups them into novel clusters, and members
with posterior above 0.95 are harvested as weak labels.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .clustering import GmmModel, fit_gmm, gmm_posteriors


class DetectorError(ValueError):
    pass


@dataclass(frozen=True)
class MappingScore:
    instance_id: str
    best_known: int
    score: float


@dataclass(frozen=True)
class WeakLabel:
    instance_id: str
    novel_index: int      # in [k_known, k_known + k_novel)
    posterior: float


@dataclass
class WeakLabelSet:
    entries: list[WeakLabel]
    k_known: int
    k_novel: int

    def __len__(self) -> int:
        return len(self.entries)

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(json.dumps({
                    "id": entry.instance_id,
                    "novel_index": entry.novel_index,
                    "posterior": entry.posterior,
                }) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path, k_known: int, k_novel: int) -> "WeakLabelSet":
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                entries.append(WeakLabel(obj["id"], int(obj["novel_index"]), float(obj["posterior"])))
        return cls(entries=entries, k_known=k_known, k_novel=k_novel)


def mapping_scores(latents: np.ndarray, ids: Sequence[str]) -> list[MappingScore]:
    """Score latent columns against the known one-hot axes.

    With one-hot axes, cosine against axis c is component c over the L2 norm,
    so the best axis is simply the argmax component.  Zero-norm vectors match
    nothing and are forced to score -1 (guaranteed outliers).
    """
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim != 2:
        raise DetectorError("latents must be (k_known, n)")
    if latents.shape[1] != len(ids):
        raise DetectorError("number of latent columns must match ids")
    norms = np.linalg.norm(latents, axis=0)
    out: list[MappingScore] = []
    for j, ident in enumerate(ids):
        v = latents[:, j]
        best = int(np.argmax(v))
        if norms[j] == 0.0:
            warnings.warn(f"zero-norm latent vector for {ident!r}; forcing outlier score -1")
            out.append(MappingScore(ident, best, -1.0))
        else:
            out.append(MappingScore(ident, best, float(v[best] / norms[j])))
    return out


def select_outliers(scores: Sequence[MappingScore], fraction: float = 0.05) -> list[str]:
    """Ids of the max(1, floor(fraction * N)) lowest-scoring instances.

    Ties at the cut are broken by input order (earlier instances win).
    """
    if not 0.0 < fraction < 1.0:
        raise DetectorError("fraction must be in (0, 1)")
    if not scores:
        raise DetectorError("no scores")
    n_out = max(1, int(np.floor(fraction * len(scores))))
    values = np.array([s.score for s in scores])
    order = np.argsort(values, kind="stable")
    return [scores[i].instance_id for i in order[:n_out]]


@dataclass
class DetectionClusters:
    """Grouping of the outlier candidates, before confidence filtering."""

    outlier_ids: list[str]
    model: GmmModel
    components: np.ndarray        # (n_outliers,) hard argmax component
    posteriors: np.ndarray        # (n_outliers,) posterior of that component


def extract_weak_labels(
    outlier_ids: Sequence[str],
    outlier_latents: np.ndarray,
    k_known: int,
    k_novel: int,
    threshold: float = 0.95,
    seed: int = 0,
) -> tuple[WeakLabelSet, DetectionClusters]:
    """Cluster outlier latents into k_novel mixture components and keep the
    confident members as weak labels.

    Cluster i maps to novel relation index k_known + i; the identity of each
    slot is arbitrary (fixed by the seed) and only resolved at evaluation
    time through clustering metrics.
    """
    latents = np.asarray(outlier_latents, dtype=np.float64)
    if latents.ndim != 2 or latents.shape[1] != len(outlier_ids):
        raise DetectorError("outlier_latents must be (k_known, n_outliers) matching ids")
    n = len(outlier_ids)
    if n < k_novel:
        raise DetectorError(
            f"only {n} outliers for {k_novel} novel clusters; raise the outlier fraction"
        )
    points = latents.T
    model = fit_gmm(points, k_novel, seed=seed)
    post = gmm_posteriors(model, points)
    components = np.argmax(post, axis=1)
    best = post[np.arange(n), components]

    entries = [
        WeakLabel(instance_id=outlier_ids[i], novel_index=k_known + int(components[i]),
                  posterior=float(best[i]))
        for i in range(n)
        if best[i] > threshold
    ]
    if not entries:
        warnings.warn("weak-label set is empty: no outlier posterior exceeded the threshold")
    weak = WeakLabelSet(entries=entries, k_known=k_known, k_novel=k_novel)
    clusters = DetectionClusters(
        outlier_ids=list(outlier_ids), model=model, components=components, posteriors=best,
    )
    return weak, clusters
