"""Clustering and classification metrics, plus the Hungarian alignment utility.

Known-relation quality is precision/recall/F1 restricted to ground-truth
known instances (micro and macro averaged).  Novel-relation quality is
measured on ground-truth novel instances with B-cubed, V-measure, and the
adjusted Rand index, all computed from a shared contingency table.  Weak-label
quality is cluster purity plus the count of novel relations identified.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, log
from typing import Hashable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


class MetricsError(ValueError):
    pass


@dataclass
class ContingencyTable:
    """Counts n[i, j] of items in predicted cluster i and truth class j."""

    counts: np.ndarray                 # (n_pred, n_true) int64
    pred_labels: list[Hashable]
    true_labels: list[Hashable]

    @classmethod
    def from_labels(cls, pred: Sequence[Hashable], true: Sequence[Hashable]) -> "ContingencyTable":
        if len(pred) != len(true):
            raise MetricsError("pred and true must have equal length")
        if len(pred) == 0:
            raise MetricsError("empty clustering")
        pred_labels = sorted(set(pred), key=repr)
        true_labels = sorted(set(true), key=repr)
        p_index = {lab: i for i, lab in enumerate(pred_labels)}
        t_index = {lab: j for j, lab in enumerate(true_labels)}
        counts = np.zeros((len(pred_labels), len(true_labels)), dtype=np.int64)
        for p, t in zip(pred, true):
            counts[p_index[p], t_index[t]] += 1
        return cls(counts=counts, pred_labels=pred_labels, true_labels=true_labels)

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class PrfScores:
    precision: float
    recall: float
    f1: float


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0.0 else 2.0 * p * r / (p + r)


def known_prf(
    pred_known: dict[str, int | None],
    gold: dict[str, str],
    known_names: Sequence[str],
) -> tuple[PrfScores, PrfScores]:
    """Micro and macro P/R/F1 over ground-truth known instances.

    ``pred_known[id]`` is the predicted known-relation index, or None when the
    instance was routed to a novel cluster.  ``gold`` maps every unlabeled id
    to its true relation name; only ids whose gold label is in ``known_names``
    participate.  Instances whose gold label is novel never count as false
    positives here; their misrouting is a novel-clustering concern.
    """
    name_to_idx = {name: i for i, name in enumerate(known_names)}
    gt_known = {i: name_to_idx[lab] for i, lab in gold.items() if lab in name_to_idx}
    if not gt_known:
        raise MetricsError("no ground-truth known instances")
    k = len(known_names)
    tp = np.zeros(k, dtype=np.int64)
    fp = np.zeros(k, dtype=np.int64)
    fn = np.zeros(k, dtype=np.int64)
    for ident, true_idx in gt_known.items():
        if ident not in pred_known:
            raise MetricsError(f"missing assignment for instance {ident!r}")
        pred = pred_known[ident]
        if pred == true_idx:
            tp[true_idx] += 1
        else:
            fn[true_idx] += 1
            if pred is not None:
                fp[pred] += 1

    tp_all, fp_all, fn_all = tp.sum(), fp.sum(), fn.sum()
    micro_p = float(tp_all / (tp_all + fp_all)) if tp_all + fp_all else 0.0
    micro_r = float(tp_all / (tp_all + fn_all)) if tp_all + fn_all else 0.0
    micro = PrfScores(micro_p, micro_r, _f1(micro_p, micro_r))

    present = sorted({idx for idx in gt_known.values()})
    per_p, per_r, per_f = [], [], []
    for idx in present:
        p = float(tp[idx] / (tp[idx] + fp[idx])) if tp[idx] + fp[idx] else 0.0
        r = float(tp[idx] / (tp[idx] + fn[idx])) if tp[idx] + fn[idx] else 0.0
        per_p.append(p)
        per_r.append(r)
        per_f.append(_f1(p, r))
    macro = PrfScores(float(np.mean(per_p)), float(np.mean(per_r)), float(np.mean(per_f)))
    return micro, macro


def bcubed(pred: Sequence[Hashable], true: Sequence[Hashable]) -> PrfScores:
    """Item-averaged cluster precision/recall.

    Per item: precision = |cluster ∩ class| / |cluster|, recall =
    |cluster ∩ class| / |class|; both averaged over items, F1 is the harmonic
    mean of the two averages.
    """
    table = ContingencyTable.from_labels(pred, true)
    counts = table.counts.astype(np.float64)
    rows = table.row_sums.astype(np.float64)
    cols = table.col_sums.astype(np.float64)
    n = table.total
    # Every item in cell (i, j) has precision n_ij / a_i and recall n_ij / b_j.
    precision = float(np.sum(counts * counts / rows[:, None]) / n)
    recall = float(np.sum(counts * counts / cols[None, :]) / n)
    return PrfScores(precision, recall, _f1(precision, recall))


def _entropy(sizes: np.ndarray, n: int) -> float:
    probs = sizes[sizes > 0] / n
    return float(-np.sum(probs * np.log(probs)))


def v_measure(pred: Sequence[Hashable], true: Sequence[Hashable]) -> tuple[float, float, float]:
    """(homogeneity, completeness, V) with the 1.0 convention for zero reference entropy."""
    table = ContingencyTable.from_labels(pred, true)
    n = table.total
    h_true = _entropy(table.col_sums, n)
    h_pred = _entropy(table.row_sums, n)
    # Conditional entropies from the joint counts.
    h_true_given_pred = 0.0
    h_pred_given_true = 0.0
    for i in range(table.counts.shape[0]):
        for j in range(table.counts.shape[1]):
            nij = table.counts[i, j]
            if nij == 0:
                continue
            p = nij / n
            h_true_given_pred -= p * log(nij / table.row_sums[i])
            h_pred_given_true -= p * log(nij / table.col_sums[j])
    homogeneity = 1.0 if h_true == 0.0 else 1.0 - h_true_given_pred / h_true
    completeness = 1.0 if h_pred == 0.0 else 1.0 - h_pred_given_true / h_pred
    return homogeneity, completeness, _f1(homogeneity, completeness)


def ari(pred: Sequence[Hashable], true: Sequence[Hashable]) -> float:
    """Adjusted Rand index by pair counting on the contingency table.

    Degenerate convention: with a single truth class or a single predicted
    cluster the index provably equals its chance expectation, so the
    correction is undefined and the score is taken as 1.0 (likewise when the
    denominator vanishes outright).
    """
    table = ContingencyTable.from_labels(pred, true)
    if len(table.pred_labels) == 1 or len(table.true_labels) == 1:
        return 1.0
    sum_cells = sum(comb(int(nij), 2) for nij in table.counts.flat)
    sum_rows = sum(comb(int(a), 2) for a in table.row_sums)
    sum_cols = sum(comb(int(b), 2) for b in table.col_sums)
    total_pairs = comb(table.total, 2)
    expected = sum_rows * sum_cols / total_pairs
    maximum = 0.5 * (sum_rows + sum_cols)
    if maximum == expected:
        return 1.0
    return float((sum_cells - expected) / (maximum - expected))


def purity(
    pred: Sequence[Hashable],
    true: Sequence[Hashable],
    novel_labels: Sequence[Hashable] | None = None,
) -> tuple[float, int]:
    """Outlier-cluster purity plus the number of identified novel relations.

    Purity sums each cluster's majority-class overlap and divides by the
    total number of clustered items.  A relation counts as identified when it
    is the majority class of at least one cluster (majority ties go to the
    label that sorts first); when ``novel_labels`` is given, only those
    relations are counted.
    """
    table = ContingencyTable.from_labels(pred, true)
    majority_sum = 0
    majorities: set[Hashable] = set()
    for i in range(table.counts.shape[0]):
        row = table.counts[i]
        best = int(np.argmax(row))
        majority_sum += int(row[best])
        majorities.add(table.true_labels[best])
    if novel_labels is not None:
        majorities &= set(novel_labels)
    return majority_sum / table.total, len(majorities)


def _lsa_cost(cost: np.ndarray) -> float:
    if cost.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def hungarian_align(cost: np.ndarray | Sequence[Sequence[float]]) -> tuple[list[tuple[int, int]], float]:
    """Minimum-cost one-to-one matching of min(k, m) pairs.

    Among optimal matchings, returns the lexicographically smallest one over
    the smaller dimension (row by row, each taking the smallest column index
    that still admits an optimal completion).
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.size == 0:
        raise MetricsError("cost matrix must be non-empty and 2-d")
    if not np.all(np.isfinite(cost)):
        raise MetricsError("cost matrix must be finite")
    transposed = cost.shape[0] > cost.shape[1]
    c = cost.T if transposed else cost
    k, m = c.shape
    best = _lsa_cost(c)
    tol = 1e-9 * max(1.0, abs(best))
    free_cols = list(range(m))
    pairs: list[tuple[int, int]] = []
    fixed = 0.0
    for r in range(k):
        for pos, col in enumerate(free_cols):
            remaining_cols = free_cols[:pos] + free_cols[pos + 1:]
            sub = c[np.ix_(range(r + 1, k), remaining_cols)]
            if fixed + c[r, col] + _lsa_cost(sub) <= best + tol:
                pairs.append((r, col))
                fixed += c[r, col]
                free_cols = remaining_cols
                break
        else:
            raise MetricsError("failed to extend an optimal matching")  # pragma: no cover
    if transposed:
        pairs = sorted((col, r) for r, col in pairs)
    return pairs, best


@dataclass
class MetricsReport:
    """All pipeline metrics, serialized with fixed key names."""

    known_micro: PrfScores
    known_macro: PrfScores
    b3: PrfScores
    homogeneity: float
    completeness: float
    v_f1: float
    ari: float
    purity: float | None = None
    identified: int | None = None

    def to_json_dict(self) -> dict:
        return {
            # Headline P/R/F1 are macro-averaged; micro is always alongside.
            "P": self.known_macro.precision,
            "R": self.known_macro.recall,
            "F1": self.known_macro.f1,
            "known_micro": {
                "P": self.known_micro.precision,
                "R": self.known_micro.recall,
                "F1": self.known_micro.f1,
            },
            "b3_p": self.b3.precision,
            "b3_r": self.b3.recall,
            "b3_f1": self.b3.f1,
            "hom": self.homogeneity,
            "comp": self.completeness,
            "v_f1": self.v_f1,
            "ari": self.ari,
            "purity": self.purity,
            "identified": self.identified,
        }
