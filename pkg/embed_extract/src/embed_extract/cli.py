"""Command-line entry point for the extractor."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .extract import CorpusFormatError, extract_file


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-extract",
        description="Turn a relation corpus (JSONL of tokenized sentences with "
                    "entity spans) into relation embeddings via entity-marker "
                    "pooling of a transformer encoder.",
    )
    parser.add_argument("--input", type=Path, required=True, help="corpus JSONL")
    parser.add_argument("--output", type=Path, required=True, help="embedding JSONL")
    parser.add_argument("--encoder", required=True,
                        help="model name or checkpoint directory")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--max-length", type=int, default=128)
    parser.add_argument("--marker-seed", type=int, default=0,
                        help="seed for the frozen marker-embedding init")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        written = extract_file(args.input, args.output, args.encoder,
                               batch_size=args.batch_size, max_length=args.max_length,
                               marker_seed=args.marker_seed)
    except (CorpusFormatError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {written} embeddings to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
