"""Joint classification/clustering training of a small projection head.

The trainable model is a two-layer tanh head mapping input vectors to
representations, followed by an affine classifier over all known + novel
relation slots.  Three losses drive it:

* classification: mean softmax cross-entropy over the batch;
* labeled margin: triplet hinge on cosine distance over positive pairs
  sampled from the labeled set only;
* exemplar: a temperature InfoNCE term pulling L2-normalized representations
  toward their own K-Means exemplar at several granularities.

Gradient routing: the classifier parameters (phi) are updated from the
classification loss alone; the head parameters (theta) receive the sum of all
three losses, including the classification gradient flowing back through the
classifier.  All gradients are analytic; the optimizer is Adam with decoupled
weight decay (decay defaults to 0 so untouched parameters stay fixed).

Randomness is split into four independent streams spawned from the config
seed, in order: parameter init, epoch shuffling, pair/negative sampling, and
exemplar K-Means seeding.  Identical inputs + config therefore reproduce
identical parameters bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clustering import kmeans


class TrainerError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite loss ({value}) at epoch {epoch}")
        self.epoch = epoch


@dataclass
class HeadParams:
    """theta = (w1, b1, w2, b2): the projection head; phi = (wc, bc): the classifier."""

    w1: np.ndarray   # (hidden, d)
    b1: np.ndarray   # (hidden,)
    w2: np.ndarray   # (repr, hidden)
    b2: np.ndarray   # (repr,)
    wc: np.ndarray   # (classes, repr)
    bc: np.ndarray   # (classes,)

    @classmethod
    def init(cls, d: int, hidden: int, repr_dim: int, n_classes: int,
             rng: np.random.Generator) -> "HeadParams":
        def layer(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray]:
            bound = 1.0 / math.sqrt(n_in)
            w = rng.uniform(-bound, bound, size=(n_out, n_in))
            b = rng.uniform(-bound, bound, size=n_out)
            return w, b

        w1, b1 = layer(hidden, d)
        w2, b2 = layer(repr_dim, hidden)
        wc, bc = layer(n_classes, repr_dim)
        return cls(w1, b1, w2, b2, wc, bc)

    def theta(self) -> list[tuple[str, np.ndarray]]:
        return [("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)]

    def phi(self) -> list[tuple[str, np.ndarray]]:
        return [("wc", self.wc), ("bc", self.bc)]

    @property
    def dims(self) -> dict:
        return {
            "d": self.w1.shape[1], "hidden": self.w1.shape[0],
            "repr": self.w2.shape[0], "classes": self.wc.shape[0],
        }

    def copy(self) -> "HeadParams":
        return HeadParams(*(a.copy() for a in (self.w1, self.b1, self.w2, self.b2, self.wc, self.bc)))

    def to_json_dict(self) -> dict:
        return {
            "dims": self.dims,
            "theta": {n: a.tolist() for n, a in self.theta()},
            "phi": {n: a.tolist() for n, a in self.phi()},
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "HeadParams":
        t, p = obj["theta"], obj["phi"]
        return cls(*(np.asarray(t[n], dtype=np.float64) for n in ("w1", "b1", "w2", "b2")),
                   *(np.asarray(p[n], dtype=np.float64) for n in ("wc", "bc")))


@dataclass
class ForwardCache:
    x: np.ndarray
    a1: np.ndarray       # tanh activations, (n, hidden)
    h: np.ndarray        # representations, (n, repr)
    logits: np.ndarray   # (n, classes)


def forward(params: HeadParams, x: np.ndarray) -> ForwardCache:
    """Batched forward pass; rows of x are instances."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if not np.all(np.isfinite(x)):
        raise TrainerError("non-finite input to forward pass")
    a1 = np.tanh(x @ params.w1.T + params.b1)
    h = a1 @ params.w2.T + params.b2
    logits = h @ params.wc.T + params.bc
    return ForwardCache(x=x, a1=a1, h=h, logits=logits)


def backward(
    params: HeadParams,
    cache: ForwardCache,
    d_h: np.ndarray | None,
    d_logits: np.ndarray | None,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Backpropagate representation and logit gradients.

    Returns (theta_grads, phi_grads).  phi only ever sees ``d_logits``; the
    classifier's contribution to the head flows into theta alongside ``d_h``.
    """
    n = cache.x.shape[0]
    dh = np.zeros_like(cache.h) if d_h is None else d_h.copy()
    phi_grads = {"wc": np.zeros_like(params.wc), "bc": np.zeros_like(params.bc)}
    if d_logits is not None:
        phi_grads["wc"] = d_logits.T @ cache.h
        phi_grads["bc"] = d_logits.sum(axis=0)
        dh += d_logits @ params.wc
    da1 = dh @ params.w2
    dz1 = da1 * (1.0 - cache.a1 ** 2)
    theta_grads = {
        "w2": dh.T @ cache.a1,
        "b2": dh.sum(axis=0),
        "w1": dz1.T @ cache.x,
        "b1": dz1.sum(axis=0),
    }
    return theta_grads, phi_grads


def loss_classification(
    logits: np.ndarray, labels: np.ndarray, n_classes: int
) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient (softmax - onehot) / batch."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n = logits.shape[0]
    if n == 0:
        raise TrainerError("empty batch")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise TrainerError(f"label out of range [0, {n_classes})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=1))
    log_probs = shifted - log_z[:, None]
    loss = float(-np.mean(log_probs[np.arange(n), labels]))
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def sample_positive_pairs(
    labels: Sequence[int] | np.ndarray, d_m: int, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """Sample up to ``d_m`` same-relation index pairs, balanced across relations.

    Each relation with at least two instances gets a quota of
    ceil(d_m / n_eligible) distinct unordered pairs (or all its pairs when it
    has fewer); contributions are interleaved round-robin before truncating
    to ``d_m`` so the balance survives truncation.
    """
    if d_m <= 0:
        return []
    labels = np.asarray(labels)
    by_rel: dict[int, np.ndarray] = {
        int(r): np.flatnonzero(labels == r) for r in np.unique(labels)
    }
    eligible = {r: idx for r, idx in by_rel.items() if len(idx) >= 2}
    if not eligible:
        raise TrainerError("no relation has two labeled instances; cannot form positive pairs")
    quota = math.ceil(d_m / len(eligible))
    per_rel: list[list[tuple[int, int]]] = []
    for r in sorted(eligible):
        idx = eligible[r]
        m = len(idx)
        n_pairs = m * (m - 1) // 2
        take = min(quota, n_pairs)
        if n_pairs <= 4 * quota:
            # Enumerate all distinct pairs and choose without replacement.
            all_pairs = [(int(idx[i]), int(idx[j])) for i in range(m) for j in range(i + 1, m)]
            chosen = rng.choice(n_pairs, size=take, replace=False)
            per_rel.append([all_pairs[c] for c in chosen])
        else:
            seen: set[tuple[int, int]] = set()
            picked: list[tuple[int, int]] = []
            while len(picked) < take:
                i, j = rng.integers(m), rng.integers(m)
                if i == j:
                    continue
                pair = (int(idx[min(i, j)]), int(idx[max(i, j)]))
                if pair in seen:
                    continue
                seen.add(pair)
                picked.append(pair)
            per_rel.append(picked)
    out: list[tuple[int, int]] = []
    depth = max(len(p) for p in per_rel)
    for level in range(depth):
        for pairs in per_rel:
            if level < len(pairs):
                out.append(pairs[level])
            if len(out) == d_m:
                return out
    return out


def sample_negatives(
    labels: Sequence[int] | np.ndarray, anchor_labels: Sequence[int], rng: np.random.Generator
) -> list[int] | None:
    """One negative index per anchor, drawn from instances of another relation.

    Returns None when every instance shares one relation (no negative exists).
    """
    labels = np.asarray(labels)
    out: list[int] = []
    for lab in anchor_labels:
        candidates = np.flatnonzero(labels != lab)
        if len(candidates) == 0:
            return None
        out.append(int(candidates[rng.integers(len(candidates))]))
    return out


def _cosine_with_grads(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise cosine plus gradients w.r.t. u and v; zero-norm rows get
    cosine 0 and zero gradient (distance pinned at 1)."""
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    ok = (nu > 0) & (nv > 0)
    if not np.all(ok):
        warnings.warn("zero-norm representation in cosine distance; treating distance as 1")
    safe_nu = np.where(nu > 0, nu, 1.0)
    safe_nv = np.where(nv > 0, nv, 1.0)
    dot = np.einsum("nd,nd->n", u, v)
    cos = np.where(ok, dot / (safe_nu * safe_nv), 0.0)
    du = (v / (safe_nu * safe_nv)[:, None]) - (cos / safe_nu ** 2)[:, None] * u
    dv = (u / (safe_nu * safe_nv)[:, None]) - (cos / safe_nv ** 2)[:, None] * v
    du[~ok] = 0.0
    dv[~ok] = 0.0
    return cos, du, dv, ok


def loss_triplet(
    anchors: np.ndarray, positives: np.ndarray, negatives: np.ndarray, gamma: float
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Mean hinge on cosine distances: max(d(a,p) - d(a,n) + gamma, 0).

    Returns the loss and gradients w.r.t. anchors, positives, and negatives;
    the subgradient at the hinge point is 0.
    """
    anchors = np.atleast_2d(anchors)
    positives = np.atleast_2d(positives)
    negatives = np.atleast_2d(negatives)
    m = anchors.shape[0]
    cos_ap, d_ap_a, d_ap_p, _ = _cosine_with_grads(anchors, positives)
    cos_an, d_an_a, d_an_n, _ = _cosine_with_grads(anchors, negatives)
    terms = (1.0 - cos_ap) - (1.0 - cos_an) + gamma
    active = terms > 0.0
    loss = float(np.sum(np.where(active, terms, 0.0)) / m)
    scale = active.astype(np.float64)[:, None] / m
    # d term / d a = -dcos_ap/da + dcos_an/da, etc.
    da = scale * (-d_ap_a + d_an_a)
    dp = scale * (-d_ap_p)
    dn = scale * d_an_n
    return loss, da, dp, dn


@dataclass
class ExemplarLayer:
    k: int
    centroids: np.ndarray     # (k, repr), L2-normalized
    membership: np.ndarray    # population-indexed cluster id


@dataclass
class ExemplarSet:
    layers: list[ExemplarLayer]


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.where(norms > 1e-12, x / np.where(norms > 0, norms, 1.0), x)


def compute_exemplars(
    representations: np.ndarray, layers: Sequence[int], seed: int
) -> ExemplarSet:
    """K-Means exemplars of the L2-normalized representations, one clustering
    per granularity; layers larger than the population are clamped."""
    reps = _normalize_rows(np.asarray(representations, dtype=np.float64))
    n = reps.shape[0]
    out: list[ExemplarLayer] = []
    for offset, c_l in enumerate(layers):
        if c_l < 1:
            raise TrainerError("granularity layers must be >= 1")
        k = min(c_l, n)
        if k < c_l:
            warnings.warn(f"granularity {c_l} clamped to population size {n}")
        result = kmeans(reps, k, seed=seed + offset)
        out.append(ExemplarLayer(
            k=k, centroids=_normalize_rows(result.centroids), membership=result.assignments,
        ))
    return ExemplarSet(layers=out)


def loss_exemplar(
    representations: np.ndarray,
    memberships: Sequence[np.ndarray],
    exemplars: ExemplarSet,
    tau: float,
    n_negatives: int,
    rng: np.random.Generator,
    mean: bool = False,
    all_negatives: bool = False,
) -> tuple[float, np.ndarray]:
    """Exemplar InfoNCE over the batch.

    Per instance and layer the loss is -log of the softmax (at temperature
    ``tau``) of the own-exemplar similarity against ``n_negatives`` sampled
    other exemplars (or all of them when ``all_negatives``); layer losses are
    averaged (1/L) and instance losses summed, or averaged with ``mean``.
    Layers with a single exemplar have no negatives and contribute zero.
    """
    reps = np.atleast_2d(np.asarray(representations, dtype=np.float64))
    n, _ = reps.shape
    n_layers = len(exemplars.layers)
    if n_layers != len(memberships):
        raise TrainerError("membership list must match exemplar layers")
    norms = np.linalg.norm(reps, axis=1, keepdims=True)
    unit = np.where(norms > 1e-12, reps / np.where(norms > 0, norms, 1.0), reps)

    total = 0.0
    d_unit = np.zeros_like(unit)
    for layer, member in zip(exemplars.layers, memberships):
        if layer.k < 2:
            warnings.warn("granularity layer has a single exemplar; it contributes no loss")
            continue
        member = np.asarray(member, dtype=np.int64)
        if all_negatives or layer.k - 1 <= n_negatives:
            sel = np.tile(np.arange(layer.k - 1), (n, 1))
        else:
            # J distinct draws per row from the k-1 non-positive slots.
            sel = np.argsort(rng.random((n, layer.k - 1)), axis=1)[:, :n_negatives]
        # Map slot q to exemplar index, skipping each row's own exemplar.
        negs = sel + (sel >= member[:, None])
        chosen = np.concatenate([member[:, None], negs], axis=1)      # (n, 1+J)
        s = np.einsum("nd,nqd->nq", unit, layer.centroids[chosen]) / tau
        shifted = s - s.max(axis=1, keepdims=True)
        log_z = np.log(np.sum(np.exp(shifted), axis=1))
        total += float(np.sum(log_z - shifted[:, 0])) / n_layers
        soft = np.exp(shifted - log_z[:, None])
        # d loss / d unit = (sum_q p_q e_q - e_pos) / tau, averaged over layers.
        d_unit += (np.einsum("nq,nqd->nd", soft, layer.centroids[chosen])
                   - layer.centroids[member]) / tau / n_layers
    if mean:
        total /= n
        d_unit /= n
    # Backprop through the L2 normalization: d h = (I - u u^T) / ||h|| applied to d u.
    proj = d_unit - np.einsum("nd,nd->n", unit, d_unit)[:, None] * unit
    d_reps = np.where(norms > 1e-12, proj / np.where(norms > 0, norms, 1.0), 0.0)
    return float(total), d_reps


@dataclass
class TrainConfig:
    gamma: float = 0.75
    tau: float = 0.02
    negatives: int = 10
    warmup_epochs: int = 2
    continual_epochs: int = 5
    learning_rate: float = 1e-3
    batch_size: int = 64
    hidden_dim: int = 96
    repr_dim: int = 96
    granularity_layers: tuple[int, ...] | None = None   # default [16, 32, n_classes, 64]
    pair_multiplier: int = 5
    weight_decay: float = 0.0
    exemplar_mean: bool = False
    exemplar_all_negatives: bool = False
    use_classification_loss: bool = True
    use_triplet_loss: bool = True
    use_exemplar_loss: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.gamma < 0:
            raise TrainerError("gamma must be >= 0")
        if self.tau <= 0:
            raise TrainerError("tau must be > 0")
        if self.negatives < 1:
            raise TrainerError("negatives must be >= 1")
        if self.warmup_epochs < 0 or self.continual_epochs < 0:
            raise TrainerError("epoch counts must be >= 0")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise TrainerError("invalid learning rate or batch size")
        if self.pair_multiplier < 0:
            raise TrainerError("pair_multiplier must be >= 0")
        if self.granularity_layers is not None and any(c < 1 for c in self.granularity_layers):
            raise TrainerError("granularity layers must be >= 1")

    def resolved_layers(self, n_classes: int) -> tuple[int, ...]:
        if self.granularity_layers is not None:
            return tuple(self.granularity_layers)
        return (16, 32, n_classes, 64)


class AdamW:
    """Adam with decoupled weight decay; state keyed by parameter name."""

    def __init__(self, lr: float, weight_decay: float = 0.0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.wd = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, named_params: list[tuple[str, np.ndarray]], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, param in named_params:
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(param)
                self.v[name] = np.zeros_like(param)
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            m_hat = self.m[name] / (1 - self.b1 ** self.t)
            v_hat = self.v[name] / (1 - self.b2 ** self.t)
            param -= self.lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.wd * param)


@dataclass
class EpochStats:
    epoch: int
    phase: str
    loss_classification: float
    loss_margin: float
    loss_exemplar: float
    loss_total: float


@dataclass
class TrainResult:
    params: HeadParams
    trace: list[EpochStats]


def _rng_streams(seed: int) -> tuple[np.random.Generator, ...]:
    children = np.random.SeedSequence(seed).spawn(4)
    return tuple(np.random.default_rng(c) for c in children)


def train(
    x_labeled: np.ndarray,
    y_labeled: np.ndarray,
    x_unlabeled: np.ndarray,
    weak_indices: np.ndarray,
    weak_labels: np.ndarray,
    n_classes: int,
    config: TrainConfig,
) -> TrainResult:
    """Warm-up on the labeled set, then continual training on labeled plus
    weak-labeled instances; exemplars are recomputed from the representations
    of the full population (labeled + unlabeled) at the start of every epoch.

    ``weak_indices`` point into ``x_unlabeled`` rows; ``weak_labels`` are
    relation indices in [n_known, n_classes).
    """
    config.validate()
    x_labeled = np.asarray(x_labeled, dtype=np.float64)
    x_unlabeled = np.asarray(x_unlabeled, dtype=np.float64)
    y_labeled = np.asarray(y_labeled, dtype=np.int64)
    weak_indices = np.asarray(weak_indices, dtype=np.int64)
    weak_labels = np.asarray(weak_labels, dtype=np.int64)
    if x_labeled.ndim != 2 or x_labeled.shape[0] == 0:
        raise TrainerError("labeled data must be a non-empty (m, d) array")
    if weak_labels.size and (weak_labels.min() < 0 or weak_labels.max() >= n_classes):
        raise TrainerError("weak label index out of range")
    if weak_indices.size and (weak_indices.min() < 0 or weak_indices.max() >= len(x_unlabeled)):
        raise TrainerError("weak index out of range")

    m = x_labeled.shape[0]
    d = x_labeled.shape[1]
    init_rng, shuffle_rng, sample_rng, exemplar_rng = _rng_streams(config.seed)
    params = HeadParams.init(d, config.hidden_dim, config.repr_dim, n_classes, init_rng)
    optimizer = AdamW(lr=config.learning_rate, weight_decay=config.weight_decay)

    population = np.vstack([x_labeled, x_unlabeled]) if len(x_unlabeled) else x_labeled
    layers = config.resolved_layers(n_classes)
    total_epochs = config.warmup_epochs + config.continual_epochs
    trace: list[EpochStats] = []

    for epoch in range(1, total_epochs + 1):
        phase = "warmup" if epoch <= config.warmup_epochs else "continual"
        exemplars: ExemplarSet | None = None
        if config.use_exemplar_loss and layers:
            pop_h = forward(params, population).h
            exemplars = compute_exemplars(pop_h, layers, seed=int(exemplar_rng.integers(2 ** 31)))

        if phase == "warmup" or weak_indices.size == 0:
            rows = np.arange(m)
            labels = y_labeled
        else:
            rows = np.concatenate([np.arange(m), m + weak_indices])
            labels = np.concatenate([y_labeled, weak_labels])
        order = shuffle_rng.permutation(len(rows))

        sums = np.zeros(3)
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            b_rows = rows[batch]
            b_labels = labels[batch]
            cache = forward(params, population[b_rows])

            l_c = l_lm = l_e = 0.0
            d_logits = None
            d_h = np.zeros_like(cache.h)
            pair_theta: dict[str, np.ndarray] | None = None

            if config.use_classification_loss:
                l_c, d_logits = loss_classification(cache.logits, b_labels, n_classes)

            if config.use_triplet_loss and config.pair_multiplier > 0:
                pairs = sample_positive_pairs(
                    y_labeled, config.pair_multiplier * len(batch), sample_rng)
                anchor_labs = [int(y_labeled[a]) for a, _ in pairs]
                negs = sample_negatives(y_labeled, anchor_labs, sample_rng)
                if negs is None:
                    warnings.warn("single labeled relation: triplet margin loss skipped")
                else:
                    involved = sorted({i for p in pairs for i in p} | set(negs))
                    local = {idx: pos for pos, idx in enumerate(involved)}
                    pair_cache = forward(params, x_labeled[involved])
                    a_rows = [local[a] for a, _ in pairs]
                    p_rows = [local[p] for _, p in pairs]
                    n_rows = [local[q] for q in negs]
                    l_lm, da, dp, dn = loss_triplet(
                        pair_cache.h[a_rows], pair_cache.h[p_rows], pair_cache.h[n_rows],
                        config.gamma)
                    d_pair_h = np.zeros_like(pair_cache.h)
                    np.add.at(d_pair_h, a_rows, da)
                    np.add.at(d_pair_h, p_rows, dp)
                    np.add.at(d_pair_h, n_rows, dn)
                    pair_theta, _ = backward(params, pair_cache, d_pair_h, None)

            if exemplars is not None:
                member = [layer.membership[b_rows] for layer in exemplars.layers]
                l_e, d_h_e = loss_exemplar(
                    cache.h, member, exemplars, config.tau, config.negatives, sample_rng,
                    mean=config.exemplar_mean, all_negatives=config.exemplar_all_negatives)
                d_h += d_h_e

            theta_grads, phi_grads = backward(params, cache, d_h, d_logits)
            if pair_theta is not None:
                for name in theta_grads:
                    theta_grads[name] += pair_theta[name]
            optimizer.step(params.theta() + params.phi(), {**theta_grads, **phi_grads})

            sums += (l_c, l_lm, l_e)
            n_batches += 1

        means = sums / max(1, n_batches)
        total = float(means.sum())
        if not np.isfinite(total):
            raise TrainingDiverged(epoch, total)
        trace.append(EpochStats(
            epoch=epoch, phase=phase,
            loss_classification=float(means[0]), loss_margin=float(means[1]),
            loss_exemplar=float(means[2]), loss_total=total,
        ))
    return TrainResult(params=params, trace=trace)
