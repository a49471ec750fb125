"""File-level orchestration of the two-phase pipeline.

Each stage consumes the previous stage's files from the output directory (or
the configured embeddings path), writes its own outputs plus an updated
manifest entry, and is composable with the others:

    synth -> split -> detect -> train -> infer -> eval

``run_all`` chains every stage and is file-for-file equivalent to running the
stages individually with the same config.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, config_hash, validate_config
from .corpus import (
    EmbeddedInstance,
    RelationCatalog,
    SplitDataset,
    build_split,
    generate_synthetic,
    load_embeddings,
    split_manifest,
    well_separated_spec,
    write_embeddings,
)
from .detector import WeakLabelSet, extract_weak_labels, mapping_scores, select_outliers
from .inference import predict, read_assignments, write_assignments
from .metrics import MetricsReport, ari, bcubed, known_prf, purity, v_measure
from .sae import encode, fit_sae
from .trainer import EpochStats, HeadParams, TrainConfig, train


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and the module error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__module__}.{type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


class Manifest:
    """Incrementally updated run manifest; every output file records the
    config hash it was produced under."""

    def __init__(self, out_dir: Path, config: dict):
        self.path = out_dir / "manifest.json"
        self.out_dir = out_dir
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as fh:
                self.data = json.load(fh)
        else:
            self.data = {"stages": {}}
        self.data["config"] = config
        self.data["config_hash"] = config_hash(config)
        self.data["versions"] = {
            "reldisc": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        }

    def record(self, stage: str, outputs: list[Path], status: str = "ok") -> None:
        entry = {"status": status, "outputs": {}}
        for path in outputs:
            entry["outputs"][path.name] = {
                "sha256": _sha256(path) if path.exists() else None,
                "config_hash": self.data["config_hash"],
            }
        self.data["stages"][stage] = entry
        self.write()

    def fail(self, stage: str, error: Exception, partial: list[Path]) -> None:
        self.record(stage, partial, status=f"failed: {error}")

    def write(self) -> None:
        with open(self.path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _embeddings_path(config: dict, out_dir: Path) -> Path:
    configured = config["paths"]["embeddings"]
    return Path(configured) if configured else out_dir / "embeddings.jsonl"


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing {path.name}; run the '{producer}' stage first")
    return path


def _load_split(
    path: Path, instances: list[EmbeddedInstance]
) -> tuple[SplitDataset, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    by_id = {inst.id: inst for inst in instances}
    labeled = [by_id[i] for i in manifest["labeled_ids"]]
    unlabeled_src = [by_id[i] for i in manifest["unlabeled_ids"]]
    unlabeled = [EmbeddedInstance(inst.id, inst.vector, None) for inst in unlabeled_src]
    eval_labels = {inst.id: inst.gold_label for inst in unlabeled_src if inst.gold_label}
    catalog = RelationCatalog(known=tuple(manifest["known"]), novel_count=manifest["novel_count"])
    split = SplitDataset(labeled=labeled, unlabeled=unlabeled, catalog=catalog,
                         eval_labels=eval_labels)
    return split, manifest


def _figures_enabled(config: dict) -> bool:
    return bool(config["report"]["figures"])


def run_synth(config: dict, out_dir: Path) -> list[Path]:
    """Generate a well-separated synthetic corpus and write it as JSONL."""
    s = config["synth"]
    known = [f"rel_known_{i}" for i in range(s["known"])]
    novel = [f"rel_novel_{i}" for i in range(s["novel"])]
    spec = well_separated_spec(
        known, novel, dim=s["dim"], separation=s["separation"], stddev=s["stddev"],
        count=s["count"], seed=s["seed"],
    )
    instances = generate_synthetic(spec)
    path = out_dir / "embeddings.jsonl"
    write_embeddings(path, instances)
    return [path]


def run_split(config: dict, out_dir: Path) -> list[Path]:
    embeddings = _require(_embeddings_path(config, out_dir), "synth")
    instances = load_embeddings(embeddings)
    novel = config["split"]["novel"]
    if not novel:
        # Synthetic corpora name their novel relations by convention.
        novel = sorted({i.gold_label for i in instances
                        if i.gold_label and i.gold_label.startswith("rel_novel_")})
    if not novel:
        raise ConfigError("split.novel must list the novel relation names")
    split = build_split(instances, novel, config["split"]["labeled_fraction"],
                        config["split"]["seed"])
    path = out_dir / "split.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(split_manifest(split, config["split"]["seed"]), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [path]


def run_detect(config: dict, out_dir: Path) -> list[Path]:
    """Phase 1: closed-form projection, mapping scores, outliers, weak labels."""
    from .corpus import instances_to_matrix

    embeddings = _require(_embeddings_path(config, out_dir), "synth")
    instances = load_embeddings(embeddings)
    split, _ = _load_split(_require(out_dir / "split.json", "split"), instances)
    gold = {inst.id: inst.gold_label for inst in instances}

    x_l = instances_to_matrix(split.labeled)
    labels_l = [gold[inst.id] for inst in split.labeled]
    p1 = config["phase1"]
    projection = fit_sae(x_l, labels_l, split.catalog.known, p1["lambda"],
                         n_threads=config["threads"])
    projection.save(out_dir / "projection.json")

    x_u = instances_to_matrix(split.unlabeled)
    latents = encode(projection, x_u)
    ids_u = [inst.id for inst in split.unlabeled]
    scores = mapping_scores(latents, ids_u)
    with open(out_dir / "mapping_scores.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "best_known", "score"])
        for s in scores:
            writer.writerow([s.instance_id, s.best_known, repr(s.score)])

    outlier_ids = select_outliers(scores, p1["outlier_fraction"])
    col_of = {ident: j for j, ident in enumerate(ids_u)}
    outlier_latents = latents[:, [col_of[i] for i in outlier_ids]]
    weak, clusters = extract_weak_labels(
        outlier_ids, outlier_latents, k_known=len(split.catalog.known),
        k_novel=split.catalog.novel_count, threshold=p1["posterior_threshold"],
        seed=p1["seed"],
    )
    weak.write_jsonl(out_dir / "weak_labels.jsonl")
    with open(out_dir / "outliers.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "component", "posterior"])
        for ident, comp, post in zip(clusters.outlier_ids, clusters.components,
                                     clusters.posteriors):
            writer.writerow([ident, int(comp), repr(float(post))])

    outputs = [out_dir / "projection.json", out_dir / "mapping_scores.csv",
               out_dir / "weak_labels.jsonl", out_dir / "outliers.csv"]
    if _figures_enabled(config):
        from .report import render_latent_scatter, render_mapping_hist

        sorted_scores = sorted(s.score for s in scores)
        cut = sorted_scores[len(outlier_ids) - 1]
        fig_path = out_dir / "mapping_scores.png"
        render_mapping_hist([s.score for s in scores], cut, fig_path,
                            dpi=config["report"]["dpi"])
        outputs.append(fig_path)
        outlier_set = set(outlier_ids)
        decisions = ["outlier" if s.instance_id in outlier_set
                     else split.catalog.known[s.best_known] for s in scores]
        scatter_path = out_dir / "latent_scatter.png"
        render_latent_scatter(latents, decisions, scatter_path, dpi=config["report"]["dpi"])
        outputs.append(scatter_path)
    return outputs


def write_loss_trace(path: Path, trace: list[EpochStats]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "phase", "L_c", "L_lm", "L_e", "total"])
        for row in trace:
            writer.writerow([row.epoch, row.phase, repr(row.loss_classification),
                             repr(row.loss_margin), repr(row.loss_exemplar),
                             repr(row.loss_total)])


def read_loss_trace(path: Path) -> list[EpochStats]:
    out: list[EpochStats] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(EpochStats(int(row["epoch"]), row["phase"], float(row["L_c"]),
                                  float(row["L_lm"]), float(row["L_e"]), float(row["total"])))
    return out


def run_train(config: dict, out_dir: Path) -> list[Path]:
    """Phase 2: warm-up then continual training with the detected weak labels."""
    embeddings = _require(_embeddings_path(config, out_dir), "synth")
    instances = load_embeddings(embeddings)
    split, _ = _load_split(_require(out_dir / "split.json", "split"), instances)
    gold = {inst.id: inst.gold_label for inst in instances}
    catalog = split.catalog

    x_l = np.stack([inst.vector for inst in split.labeled])
    y_l = np.array([catalog.index_of(gold[inst.id]) for inst in split.labeled])
    x_u = np.stack([inst.vector for inst in split.unlabeled])

    p2 = dict(config["phase2"])
    use_weak = p2.pop("use_weak_labels")
    weak_path = _require(out_dir / "weak_labels.jsonl", "detect")
    weak = WeakLabelSet.read_jsonl(weak_path, len(catalog.known), catalog.novel_count)
    if use_weak:
        pos_of = {inst.id: i for i, inst in enumerate(split.unlabeled)}
        weak_idx = np.array([pos_of[e.instance_id] for e in weak.entries], dtype=np.int64)
        weak_y = np.array([e.novel_index for e in weak.entries], dtype=np.int64)
    else:
        weak_idx = np.array([], dtype=np.int64)
        weak_y = np.array([], dtype=np.int64)

    layers = p2.pop("granularity_layers")
    train_config = TrainConfig(
        granularity_layers=tuple(layers) if layers else None,
        **p2,
    )
    result = train(x_l, y_l, x_u, weak_idx, weak_y, catalog.total, train_config)

    params_path = out_dir / "head_params.json"
    with open(params_path, "w", encoding="utf-8") as fh:
        json.dump(result.params.to_json_dict(), fh, sort_keys=True)
        fh.write("\n")
    trace_path = out_dir / "loss_trace.csv"
    write_loss_trace(trace_path, result.trace)

    outputs = [params_path, trace_path]
    if _figures_enabled(config):
        from .report import render_loss_curves

        fig_path = out_dir / "loss_curves.png"
        render_loss_curves(result.trace, fig_path, dpi=config["report"]["dpi"])
        outputs.append(fig_path)
    return outputs


def run_infer(config: dict, out_dir: Path) -> list[Path]:
    embeddings = _require(_embeddings_path(config, out_dir), "synth")
    instances = load_embeddings(embeddings)
    split, _ = _load_split(_require(out_dir / "split.json", "split"), instances)
    with open(_require(out_dir / "head_params.json", "train"), "r", encoding="utf-8") as fh:
        params = HeadParams.from_json_dict(json.load(fh))

    k_novel = config["inference"]["k_novel"] or split.catalog.novel_count
    ids = [inst.id for inst in split.unlabeled]
    x_u = np.stack([inst.vector for inst in split.unlabeled])
    assignments = predict(
        params, ids, x_u, k_known=len(split.catalog.known), k_novel=k_novel,
        seed=config["inference"]["seed"],
        normalize_representations=config["inference"]["normalize_representations"],
    )
    path = out_dir / "assignments.csv"
    write_assignments(path, assignments)
    return [path]


def run_eval(config: dict, out_dir: Path) -> list[Path]:
    """Metrics over the unlabeled side: known P/R/F1, novel clustering quality,
    and weak-label purity when the detection outputs are present."""
    embeddings = _require(_embeddings_path(config, out_dir), "synth")
    instances = load_embeddings(embeddings)
    split, _ = _load_split(_require(out_dir / "split.json", "split"), instances)
    assignments = read_assignments(_require(out_dir / "assignments.csv", "infer"))
    gold = split.eval_labels
    known_names = split.catalog.known

    pred_known = {a.instance_id: (a.index if a.kind == "known" else None)
                  for a in assignments}
    micro, macro = known_prf(pred_known, gold, known_names)

    known_set = set(known_names)
    novel_ids = [a.instance_id for a in assignments
                 if a.instance_id in gold and gold[a.instance_id] not in known_set]
    cluster_of = {a.instance_id: (a.kind, a.index) for a in assignments}
    pred_clusters = [cluster_of[i] for i in novel_ids]
    truth = [gold[i] for i in novel_ids]
    b3 = bcubed(pred_clusters, truth)
    hom, comp, v_f1 = v_measure(pred_clusters, truth)
    ari_score = ari(pred_clusters, truth)

    pur = identified = None
    outliers_path = out_dir / "outliers.csv"
    if outliers_path.exists():
        with open(outliers_path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        o_pred = [int(r["component"]) for r in rows]
        o_truth = [gold[r["instance_id"]] for r in rows]
        novel_names = sorted(set(gold.values()) - set(known_names))
        pur, identified = purity(o_pred, o_truth, novel_labels=novel_names)

    report = MetricsReport(
        known_micro=micro, known_macro=macro, b3=b3,
        homogeneity=hom, completeness=comp, v_f1=v_f1, ari=ari_score,
        purity=pur, identified=identified,
    )
    path = out_dir / "metrics.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    outputs = [path]
    if _figures_enabled(config):
        from .report import render_novel_confusion

        fig_path = out_dir / "novel_confusion.png"
        render_novel_confusion(["/".join(map(str, p)) for p in pred_clusters], truth, fig_path,
                               dpi=config["report"]["dpi"])
        outputs.append(fig_path)
    return outputs


STAGES = {
    "synth": run_synth,
    "split": run_split,
    "detect": run_detect,
    "train": run_train,
    "infer": run_infer,
    "eval": run_eval,
}


def run_stage(stage: str, config: dict, out_dir: Path) -> list[Path]:
    validate_config(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir, config)
    try:
        outputs = STAGES[stage](config, out_dir)
    except Exception as exc:
        manifest.fail(stage, exc, [])
        raise StageError(stage, exc) from exc
    manifest.record(stage, outputs)
    return outputs


def run_all(config: dict, out_dir: Path) -> dict[str, list[Path]]:
    """The full pipeline: load/generate -> split -> detect -> train -> infer -> eval."""
    validate_config(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    results: dict[str, list[Path]] = {}
    stages = list(STAGES)
    if config["paths"]["embeddings"]:
        stages.remove("synth")
    for stage in stages:
        results[stage] = run_stage(stage, config, out_dir)
    return results
