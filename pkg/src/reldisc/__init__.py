"""Open-world relation discovery over embedding vectors.

Two phases: (1) a closed-form one-hot projection flags low-similarity
instances as novel-relation candidates and harvests confident mixture-model
clusters as weak labels; (2) a small projection head plus linear classifier
train jointly on classification, triplet-margin, and exemplar-contrastive
losses, after which known relations come from the classifier and novel
instances are clustered.
"""

from .clustering import GmmModel, KMeansResult, fit_gmm, gmm_posteriors, kmeans
from .corpus import (
    EmbeddedInstance,
    RelationCatalog,
    SplitDataset,
    SyntheticSpec,
    build_split,
    generate_synthetic,
    load_embeddings,
    well_separated_spec,
    write_embeddings,
)
from .detector import (
    MappingScore,
    WeakLabelSet,
    extract_weak_labels,
    mapping_scores,
    select_outliers,
)
from .inference import Assignment, predict
from .metrics import (
    MetricsReport,
    ari,
    bcubed,
    hungarian_align,
    known_prf,
    purity,
    v_measure,
)
from .sae import ProjectionW, decode, encode, fit_sae
from .trainer import HeadParams, TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "EmbeddedInstance",
    "GmmModel",
    "HeadParams",
    "KMeansResult",
    "MappingScore",
    "MetricsReport",
    "ProjectionW",
    "RelationCatalog",
    "SplitDataset",
    "SyntheticSpec",
    "TrainConfig",
    "TrainResult",
    "WeakLabelSet",
    "ari",
    "bcubed",
    "build_split",
    "decode",
    "encode",
    "extract_weak_labels",
    "fit_gmm",
    "fit_sae",
    "generate_synthetic",
    "gmm_posteriors",
    "hungarian_align",
    "kmeans",
    "known_prf",
    "load_embeddings",
    "mapping_scores",
    "predict",
    "purity",
    "select_outliers",
    "train",
    "v_measure",
    "well_separated_spec",
    "write_embeddings",
]
