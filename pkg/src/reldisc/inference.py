"""Hybrid final assignment: classifier decisions for known relations,
K-Means clusters for everything the classifier routes to a novel slot."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .clustering import kmeans
from .trainer import HeadParams, forward


class InferenceError(ValueError):
    pass


@dataclass(frozen=True)
class Assignment:
    instance_id: str
    kind: str          # "known" | "novel"
    index: int

    def __post_init__(self) -> None:
        if self.kind not in ("known", "novel"):
            raise InferenceError(f"bad assignment kind {self.kind!r}")


def predict(
    params: HeadParams,
    ids: Sequence[str],
    x: np.ndarray,
    k_known: int,
    k_novel: int,
    seed: int,
    normalize_representations: bool = False,
) -> list[Assignment]:
    """Assign every instance a known relation or a novel cluster.

    Instances whose argmax logit is a known relation are accepted directly;
    the rest pool their representations (raw by default) and are clustered
    into ``k_novel`` groups.  A pool smaller than ``k_novel`` degenerates to
    one singleton cluster per member, with a warning.  Output order follows
    input order; argmax ties take the lowest index.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InferenceError("no instances to assign")
    if len(ids) != x.shape[0]:
        raise InferenceError("ids must match the number of rows")
    if k_novel < 1:
        raise InferenceError("k_novel must be >= 1")

    cache = forward(params, x)
    best = np.argmax(cache.logits, axis=1)
    novel_positions = np.flatnonzero(best >= k_known)

    cluster_of: dict[int, int] = {}
    if len(novel_positions) > 0:
        pool = cache.h[novel_positions]
        if normalize_representations:
            norms = np.linalg.norm(pool, axis=1, keepdims=True)
            pool = np.where(norms > 0, pool / np.where(norms > 0, norms, 1.0), pool)
        if len(novel_positions) < k_novel:
            warnings.warn(
                f"novel pool has {len(novel_positions)} members for k_novel={k_novel}; "
                "each becomes its own cluster")
            for j, pos in enumerate(novel_positions):
                cluster_of[int(pos)] = j
        else:
            result = kmeans(pool, k_novel, seed=seed)
            for pos, lab in zip(novel_positions, result.assignments):
                cluster_of[int(pos)] = int(lab)

    out: list[Assignment] = []
    for i, ident in enumerate(ids):
        if i in cluster_of:
            out.append(Assignment(ident, "novel", cluster_of[i]))
        else:
            out.append(Assignment(ident, "known", int(best[i])))
    return out


def write_assignments(path: str | Path, assignments: Sequence[Assignment]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "kind", "index"])
        for a in assignments:
            writer.writerow([a.instance_id, a.kind, a.index])


def read_assignments(path: str | Path) -> list[Assignment]:
    out: list[Assignment] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(Assignment(row["instance_id"], row["kind"], int(row["index"])))
    return out
