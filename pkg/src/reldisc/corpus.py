"""Embedding-space data model: JSONL interchange, labeled/unlabeled splits, synthetic data.

Every pipeline stage exchanges data through the embedding JSONL format: one
object per line with keys ``id`` (string), ``vec`` (array of finite numbers)
and ``label`` (string or null).  The vector dimension is fixed by the first
line of a file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class CorpusError(ValueError):
    """Malformed embedding data or an invalid split request."""


@dataclass(frozen=True, eq=False)
class EmbeddedInstance:
    """One sentence/entity-pair reduced to a fixed-dimension vector."""

    id: str
    vector: np.ndarray
    gold_label: str | None = None

    def __post_init__(self) -> None:
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise CorpusError(f"instance {self.id!r}: vector must be 1-d and non-empty")
        if not np.all(np.isfinite(vec)):
            raise CorpusError(f"instance {self.id!r}: vector contains non-finite values")
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


@dataclass(frozen=True)
class RelationCatalog:
    """Known relation names plus the number of anonymous novel slots.

    Indices 0..len(known)-1 denote known relations; len(known)..total-1 denote
    novel cluster slots.
    """

    known: tuple[str, ...]
    novel_count: int

    def __post_init__(self) -> None:
        if len(set(self.known)) != len(self.known):
            raise CorpusError("known relation names must be unique")
        if self.novel_count < 1:
            raise CorpusError("novel_count must be >= 1")

    @property
    def total(self) -> int:
        return len(self.known) + self.novel_count

    def index_of(self, name: str) -> int:
        return self.known.index(name)


@dataclass
class SplitDataset:
    """Labeled/unlabeled partition of a corpus.

    ``unlabeled`` instances carry ``gold_label=None``; their true labels are
    sealed in ``eval_labels`` and must only be consulted by evaluation code.
    """

    labeled: list[EmbeddedInstance]
    unlabeled: list[EmbeddedInstance]
    catalog: RelationCatalog
    eval_labels: dict[str, str] = field(repr=False, default_factory=dict)


def load_embeddings(path: str | Path) -> list[EmbeddedInstance]:
    """Read an embedding JSONL file, validating as it goes.

    Raises :class:`CorpusError` naming the offending line on malformed JSON,
    dimension mismatches, duplicate ids, or non-finite values.
    """
    instances: list[EmbeddedInstance] = []
    seen: set[str] = set()
    dim: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or not {"id", "vec"} <= obj.keys():
                raise CorpusError(f"{path}: line {lineno}: object must have 'id' and 'vec' keys")
            ident = obj["id"]
            if not isinstance(ident, str):
                raise CorpusError(f"{path}: line {lineno}: 'id' must be a string")
            if ident in seen:
                raise CorpusError(f"{path}: line {lineno}: duplicate id {ident!r}")
            label = obj.get("label")
            if label is not None and not isinstance(label, str):
                raise CorpusError(f"{path}: line {lineno}: 'label' must be a string or null")
            vec = obj["vec"]
            if not isinstance(vec, list) or not all(isinstance(v, (int, float)) for v in vec):
                raise CorpusError(f"{path}: line {lineno}: 'vec' must be an array of numbers")
            arr = np.asarray(vec, dtype=np.float64)
            if arr.size == 0:
                raise CorpusError(f"{path}: line {lineno}: empty vector")
            if not np.all(np.isfinite(arr)):
                raise CorpusError(f"{path}: line {lineno}: non-finite value in vector")
            if dim is None:
                dim = arr.size
            elif arr.size != dim:
                raise CorpusError(
                    f"{path}: line {lineno}: dimension mismatch (expected {dim}, got {arr.size})"
                )
            seen.add(ident)
            instances.append(EmbeddedInstance(id=ident, vector=arr, gold_label=label))
    return instances


def write_embeddings(path: str | Path, instances: Iterable[EmbeddedInstance]) -> None:
    """Write instances to the embedding JSONL format (round-trip exact)."""
    dim: int | None = None
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            if dim is None:
                dim = inst.dim
            elif inst.dim != dim:
                raise CorpusError(f"instance {inst.id!r}: dimension {inst.dim} != {dim}")
            obj = {"id": inst.id, "vec": inst.vector.tolist(), "label": inst.gold_label}
            fh.write(json.dumps(obj) + "\n")


def instances_to_matrix(instances: Sequence[EmbeddedInstance]) -> np.ndarray:
    """Stack instance vectors as columns: a d x N matrix."""
    if not instances:
        raise CorpusError("no instances")
    return np.stack([inst.vector for inst in instances], axis=1)


def build_split(
    instances: Sequence[EmbeddedInstance],
    novel_names: Iterable[str],
    labeled_fraction: float,
    seed: int,
) -> SplitDataset:
    """Partition a fully labeled corpus into labeled and unlabeled sides.

    For each known relation, floor(labeled_fraction * count) instances are
    sampled uniformly (by ``seed``) into the labeled side; the remaining known
    instances and every novel-relation instance form the unlabeled side, which
    keeps its gold labels only in the sealed ``eval_labels`` map.  Known
    relation names are ordered alphabetically in the catalog.
    """
    if not 0.0 < labeled_fraction < 1.0:
        raise CorpusError("labeled_fraction must be strictly between 0 and 1")
    novel = set(novel_names)
    if not novel:
        raise CorpusError("at least one novel relation name is required")
    by_label: dict[str, list[int]] = {}
    for pos, inst in enumerate(instances):
        if inst.gold_label is None:
            raise CorpusError(f"instance {inst.id!r} has no gold label; cannot split")
        by_label.setdefault(inst.gold_label, []).append(pos)
    missing = novel - set(by_label)
    if missing:
        raise CorpusError(f"novel names not present in data: {sorted(missing)}")
    known_names = tuple(sorted(set(by_label) - novel))
    if not known_names:
        raise CorpusError("no known relations remain after removing novel names")
    for name in known_names:
        if len(by_label[name]) < 2:
            raise CorpusError(f"known relation {name!r} has fewer than 2 instances; cannot split")

    rng = np.random.default_rng(seed)
    labeled_pos: set[int] = set()
    for name in known_names:
        positions = by_label[name]
        take = math.floor(labeled_fraction * len(positions))
        chosen = rng.permutation(len(positions))[:take]
        labeled_pos.update(positions[i] for i in chosen)

    labeled = [instances[p] for p in sorted(labeled_pos)]
    unlabeled: list[EmbeddedInstance] = []
    eval_labels: dict[str, str] = {}
    for pos, inst in enumerate(instances):
        if pos in labeled_pos:
            continue
        unlabeled.append(EmbeddedInstance(id=inst.id, vector=inst.vector, gold_label=None))
        eval_labels[inst.id] = inst.gold_label  # type: ignore[assignment]

    catalog = RelationCatalog(known=known_names, novel_count=len(novel))
    return SplitDataset(labeled=labeled, unlabeled=unlabeled, catalog=catalog, eval_labels=eval_labels)


def split_manifest(split: SplitDataset, seed: int) -> dict:
    """JSON-serializable split manifest: ids only, no labels leak."""
    return {
        "labeled_ids": [inst.id for inst in split.labeled],
        "unlabeled_ids": [inst.id for inst in split.unlabeled],
        "known": list(split.catalog.known),
        "novel_count": split.catalog.novel_count,
        "seed": seed,
    }


@dataclass(frozen=True)
class RelationSpec:
    """One synthetic relation: an isotropic Gaussian blob."""

    name: str
    mean: np.ndarray
    stddev: float
    count: int


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic embedding corpus."""

    dim: int
    relations: tuple[RelationSpec, ...]
    novel_names: tuple[str, ...]
    seed: int

    def __post_init__(self) -> None:
        names = [r.name for r in self.relations]
        if len(set(names)) != len(names):
            raise CorpusError("relation names must be unique")
        for rel in self.relations:
            if rel.count < 2:
                raise CorpusError(f"relation {rel.name!r}: count must be >= 2")
            if rel.stddev < 0:
                raise CorpusError(f"relation {rel.name!r}: stddev must be >= 0")
            if np.asarray(rel.mean).shape != (self.dim,):
                raise CorpusError(f"relation {rel.name!r}: mean must have dimension {self.dim}")
        unknown = set(self.novel_names) - set(names)
        if unknown:
            raise CorpusError(f"novel names not among relations: {sorted(unknown)}")


def generate_synthetic(spec: SyntheticSpec) -> list[EmbeddedInstance]:
    """Draw instances from each relation's isotropic Gaussian, deterministically."""
    rng = np.random.default_rng(spec.seed)
    out: list[EmbeddedInstance] = []
    for rel in spec.relations:
        mean = np.asarray(rel.mean, dtype=np.float64)
        noise = rng.standard_normal((rel.count, spec.dim))
        vectors = mean[None, :] + rel.stddev * noise
        for i in range(rel.count):
            out.append(
                EmbeddedInstance(id=f"{rel.name}:{i}", vector=vectors[i], gold_label=rel.name)
            )
    return out


def well_separated_spec(
    known_names: Sequence[str],
    novel_names: Sequence[str],
    dim: int,
    separation: float = 8.0,
    stddev: float = 1.0,
    count: int = 200,
    seed: int = 0,
) -> SyntheticSpec:
    """Place relation means so that every pair is at least ``separation`` apart.

    Known relations sit on orthogonal axes at radius separation/sqrt(2), so
    adjacent known means are exactly ``separation`` apart.  Novel relations
    sit on the *negative* mixture of all known directions, each with its own
    extra negative axis: their projections into the known one-hot space are
    then negative mixtures rather than chance-aligned with some axis, which
    keeps their mapping scores stably below every known instance and the
    outlier pool balanced across novel relations.
    """
    n_known, n_novel = len(known_names), len(novel_names)
    if dim < n_known + n_novel:
        raise CorpusError(
            f"dim must be >= known + novel relation count ({n_known + n_novel})"
        )
    axis_radius = separation / math.sqrt(2.0)
    relations: list[RelationSpec] = []
    for i, name in enumerate(known_names):
        mean = np.zeros(dim)
        mean[i] = axis_radius
        relations.append(RelationSpec(name=name, mean=mean, stddev=stddev, count=count))
    mix = np.zeros(dim)
    mix[:n_known] = -1.5 * separation / math.sqrt(n_known)
    for j, name in enumerate(novel_names):
        mean = mix.copy()
        mean[n_known + j] = -separation
        relations.append(RelationSpec(name=name, mean=mean, stddev=stddev, count=count))
    means = [rel.mean for rel in relations]
    for a, b in combinations(range(len(means)), 2):
        if np.linalg.norm(means[a] - means[b]) < separation - 1e-9:
            raise CorpusError("internal placement error: means too close")
    return SyntheticSpec(
        dim=dim,
        relations=tuple(relations),
        novel_names=tuple(novel_names),
        seed=seed,
    )
