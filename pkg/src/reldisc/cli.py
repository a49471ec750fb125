"""Command-line interface.

Subcommands map one-to-one onto pipeline stages plus ``run`` for the whole
chain.  Any config key can be overridden with a flag of the same dotted name,
e.g. ``--phase1.lambda 50`` or ``--split.novel '["r7","r8"]'``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import (
    DEFAULTS,
    iter_leaves,
    load_config,
    override_all_seeds,
    set_dotted,
)
from .pipeline import STAGES, StageError, run_all, run_stage


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON config file")
    parser.add_argument("--out", type=Path, default=Path("runs/out"), help="output directory")
    parser.add_argument("--threads", type=int, default=None, help="worker thread cap")
    parser.add_argument("--seed", type=int, default=None, help="override every stage seed")
    for dotted, value in iter_leaves(DEFAULTS):
        if dotted == "threads":
            continue
        parser.add_argument(
            f"--{dotted}", dest=f"cfg::{dotted}", metavar="V", default=None,
            help=f"config override (default: {json.dumps(value)})",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reldisc",
        description="Open-world relation discovery over embedding vectors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "run": "run the full pipeline",
        "synth": "generate a synthetic embedding corpus",
        "split": "build the labeled/unlabeled split manifest",
        "detect": "phase 1: project, score, and harvest weak labels",
        "train": "phase 2: warm-up + continual joint training",
        "infer": "assign known relations / novel clusters",
        "eval": "score assignments against gold labels",
    }
    for name in ["run", *STAGES]:
        stage_parser = sub.add_parser(name, help=descriptions[name])
        _add_common(stage_parser)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
        for key, value in vars(args).items():
            if key.startswith("cfg::") and value is not None:
                set_dotted(config, key.removeprefix("cfg::"), value)
        if args.threads is not None:
            config["threads"] = args.threads
        if args.seed is not None:
            override_all_seeds(config, args.seed)

        if args.command == "run":
            results = run_all(config, args.out)
            for stage, outputs in results.items():
                for path in outputs:
                    print(f"{stage}: wrote {path}")
        else:
            for path in run_stage(args.command, config, args.out):
                print(f"{args.command}: wrote {path}")
    except (StageError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
