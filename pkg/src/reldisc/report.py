"""Figure rendering for the report path.

All figures go to PNG files next to the delimited outputs; nothing is shown
interactively.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import ContingencyTable, hungarian_align
from .trainer import EpochStats


def render_loss_curves(trace: Sequence[EpochStats], path: str | Path, dpi: int = 120) -> None:
    """Per-loss curves over epochs, with the warm-up region shaded."""
    epochs = [t.epoch for t in trace]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(epochs, [t.loss_classification for t in trace], marker="o", label="classification")
    ax.plot(epochs, [t.loss_margin for t in trace], marker="s", label="margin")
    ax.plot(epochs, [t.loss_exemplar for t in trace], marker="^", label="exemplar")
    ax.plot(epochs, [t.loss_total for t in trace], marker="x", color="black", label="total")
    n_warm = sum(1 for t in trace if t.phase == "warmup")
    if 0 < n_warm < len(trace):
        ax.axvspan(epochs[0] - 0.5, n_warm + 0.5, alpha=0.12, color="gray", label="warm-up")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("symlog")
    ax.legend(fontsize=8)
    ax.set_title("training losses")
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)


def render_mapping_hist(
    scores: Sequence[float], threshold: float | None, path: str | Path, dpi: int = 120
) -> None:
    """Histogram of mapping scores; the outlier cut is marked when given."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.hist(list(scores), bins=50, color="steelblue", edgecolor="white")
    if threshold is not None:
        ax.axvline(threshold, color="crimson", linestyle="--", label=f"outlier cut {threshold:.3f}")
        ax.legend(fontsize=8)
    ax.set_xlabel("mapping score (best cosine to a known axis)")
    ax.set_ylabel("instances")
    ax.set_title("mapping score distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)


def render_novel_confusion(
    pred: Sequence, truth: Sequence, path: str | Path, dpi: int = 120
) -> None:
    """Contingency heatmap of predicted clusters vs ground-truth classes,
    with cluster rows reordered by a minimum-cost alignment."""
    table = ContingencyTable.from_labels(pred, truth)
    counts = table.counts.astype(float)
    pairs, _ = hungarian_align(-counts)
    order = [r for r, _ in sorted(pairs, key=lambda rc: rc[1])]
    order += [r for r in range(counts.shape[0]) if r not in order]
    counts = counts[order]
    row_labels = [str(table.pred_labels[r]) for r in order]

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    im = ax.imshow(counts, cmap="Blues")
    ax.set_xticks(range(len(table.true_labels)), [str(t) for t in table.true_labels],
                  rotation=45, ha="right", fontsize=7)
    ax.set_yticks(range(len(row_labels)), row_labels, fontsize=7)
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            if counts[i, j]:
                ax.text(j, i, int(counts[i, j]), ha="center", va="center", fontsize=6)
    ax.set_xlabel("ground truth")
    ax.set_ylabel("predicted cluster")
    ax.set_title("novel-instance confusion (aligned)")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)


def render_latent_scatter(
    latents: np.ndarray, labels: Sequence, path: str | Path, dpi: int = 120
) -> None:
    """2-d PCA projection of latent columns, colored by label."""
    x = np.asarray(latents, dtype=np.float64).T
    x = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    proj = x @ vt[:2].T
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    uniq = sorted(set(labels), key=repr)
    for lab in uniq:
        mask = np.asarray([l == lab for l in labels])
        ax.scatter(proj[mask, 0], proj[mask, 1], s=8, alpha=0.7, label=str(lab))
    if len(uniq) <= 12:
        ax.legend(fontsize=7)
    ax.set_title("latent space (PCA)")
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
