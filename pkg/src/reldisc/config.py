"""Pipeline configuration: JSON file with per-phase sections, dotted-key
command-line overrides, and a stable hash recorded in every manifest."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "paths": {
        "embeddings": None,
    },
    "split": {
        "novel": [],
        "labeled_fraction": 0.5,
        "seed": 7,
    },
    "phase1": {
        "lambda": 100.0,
        "outlier_fraction": 0.05,
        "posterior_threshold": 0.95,
        "seed": 11,
    },
    "phase2": {
        "gamma": 0.75,
        "tau": 0.02,
        "negatives": 10,
        "warmup_epochs": 2,
        "continual_epochs": 5,
        "learning_rate": 1e-3,
        "batch_size": 64,
        "hidden_dim": 96,
        "repr_dim": 96,
        "granularity_layers": None,
        "pair_multiplier": 5,
        "weight_decay": 0.0,
        "exemplar_mean": False,
        "exemplar_all_negatives": False,
        "use_weak_labels": True,
        "use_triplet_loss": True,
        "use_exemplar_loss": True,
        "seed": 13,
    },
    "inference": {
        "k_novel": None,
        "normalize_representations": False,
        "seed": 17,
    },
    "synth": {
        "dim": 64,
        "known": 5,
        "novel": 2,
        "count": 200,
        "separation": 8.0,
        "stddev": 1.0,
        "seed": 3,
    },
    "report": {
        "figures": True,
        "dpi": 120,
    },
    "threads": 1,
}


def _merge(base: dict, override: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key: {dotted}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, prefix=f"{dotted}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | Path | None = None) -> dict:
    """Defaults, deep-merged with the JSON file at ``path`` when given."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return _merge(DEFAULTS, user)


def set_dotted(config: dict, dotted: str, raw: str) -> None:
    """Override one key by its dotted path; the value is parsed as JSON with a
    plain-string fallback."""
    parts = dotted.split(".")
    node = config
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown config section: {dotted}")
        node = node[part]
    leaf = parts[-1]
    if leaf not in node:
        raise ConfigError(f"unknown config key: {dotted}")
    try:
        node[leaf] = json.loads(raw)
    except json.JSONDecodeError:
        node[leaf] = raw


def iter_leaves(config: dict, prefix: str = "") -> list[tuple[str, Any]]:
    out: list[tuple[str, Any]] = []
    for key, value in config.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            out.extend(iter_leaves(value, prefix=f"{dotted}."))
        else:
            out.append((dotted, value))
    return out


def validate_config(config: dict) -> None:
    """Range checks that must fail before any computation starts."""
    split = config["split"]
    if not 0.0 < split["labeled_fraction"] < 1.0:
        raise ConfigError("split.labeled_fraction must be in (0, 1)")
    p1 = config["phase1"]
    if p1["lambda"] <= 0:
        raise ConfigError("phase1.lambda must be > 0")
    if not 0.0 < p1["outlier_fraction"] < 1.0:
        raise ConfigError("phase1.outlier_fraction must be in (0, 1)")
    if not 0.0 <= p1["posterior_threshold"] <= 1.0:
        raise ConfigError("phase1.posterior_threshold must be in [0, 1]")
    p2 = config["phase2"]
    if p2["tau"] <= 0 or p2["gamma"] < 0:
        raise ConfigError("phase2.tau must be > 0 and phase2.gamma >= 0")
    if p2["negatives"] < 1 or p2["batch_size"] < 1 or p2["learning_rate"] <= 0:
        raise ConfigError("phase2 negatives/batch_size/learning_rate out of range")
    if p2["warmup_epochs"] < 0 or p2["continual_epochs"] < 0:
        raise ConfigError("phase2 epoch counts must be >= 0")
    inf = config["inference"]
    if inf["k_novel"] is not None and inf["k_novel"] < 1:
        raise ConfigError("inference.k_novel must be >= 1")
    if config["threads"] < 1:
        raise ConfigError("threads must be >= 1")


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def override_all_seeds(config: dict, seed: int) -> None:
    for section in ("split", "phase1", "phase2", "inference", "synth"):
        config[section]["seed"] = seed
