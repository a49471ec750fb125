"""Entity-marker relation embeddings.

Each sentence arrives pre-tokenized with a head and a tail entity span.  The
spans are wrapped in typed marker tokens, <e1:TYPE>..</e1:TYPE> and
<e2:TYPE>..</e2:TYPE>, the sentence is run through a bidirectional
transformer encoder, and the hidden states at the two *opening* marker
positions are concatenated into one fixed-length relation vector of dimension
2 x hidden size.

Marker tokens are added to the tokenizer vocabulary with seeded randomly
initialized embeddings and are never trained, so extraction is deterministic
for a given checkpoint.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch

logger = logging.getLogger(__name__)


class CorpusFormatError(ValueError):
    """Malformed text-corpus line."""


@dataclass(frozen=True)
class Span:
    start: int
    end: int          # exclusive token index
    type: str


@dataclass(frozen=True)
class TextInstance:
    id: str
    tokens: tuple[str, ...]
    head: Span
    tail: Span
    label: str | None = None

    def __post_init__(self) -> None:
        for name, span in (("head", self.head), ("tail", self.tail)):
            if not 0 <= span.start < span.end <= len(self.tokens):
                raise CorpusFormatError(f"instance {self.id!r}: {name} span out of range")
            if not span.type:
                raise CorpusFormatError(f"instance {self.id!r}: {name} type is empty")
        a, b = sorted((self.head, self.tail), key=lambda s: s.start)
        if b.start < a.end:
            raise CorpusFormatError(f"instance {self.id!r}: head and tail spans overlap")

    @property
    def open_e1(self) -> str:
        return f"<e1:{self.head.type}>"

    @property
    def open_e2(self) -> str:
        return f"<e2:{self.tail.type}>"

    def marker_tokens(self) -> list[str]:
        return [self.open_e1, f"</e1:{self.head.type}>",
                self.open_e2, f"</e2:{self.tail.type}>"]

    def marked_tokens(self) -> list[str]:
        """Sentence tokens with both marker pairs inserted."""
        # (position, opener-flag, marker): inserting right-to-left keeps earlier
        # offsets valid; when a closing marker and the other entity's opening
        # marker share an offset, processing the opener first leaves the
        # closing marker to its left, so the pairs never interleave.
        inserts = [
            (self.head.start, 1, self.open_e1),
            (self.head.end, 0, f"</e1:{self.head.type}>"),
            (self.tail.start, 1, self.open_e2),
            (self.tail.end, 0, f"</e2:{self.tail.type}>"),
        ]
        out = list(self.tokens)
        for pos, _, marker in sorted(inserts, reverse=True):
            out.insert(pos, marker)
        return out


def _parse_span(obj: dict, which: str, lineno: int) -> Span:
    try:
        raw = obj[which]
        return Span(start=int(raw["start"]), end=int(raw["end"]), type=str(raw["type"]))
    except (KeyError, TypeError) as exc:
        raise CorpusFormatError(f"line {lineno}: bad {which} span") from exc


def read_corpus(path: str | Path) -> list[TextInstance]:
    """Parse the text-corpus JSONL; errors carry the offending line number."""
    out: list[TextInstance] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            if not {"id", "tokens", "head", "tail"} <= obj.keys():
                raise CorpusFormatError(
                    f"line {lineno}: required keys are id, tokens, head, tail")
            if obj["id"] in seen:
                raise CorpusFormatError(f"line {lineno}: duplicate id {obj['id']!r}")
            seen.add(obj["id"])
            tokens = obj["tokens"]
            if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
                raise CorpusFormatError(f"line {lineno}: tokens must be a list of strings")
            try:
                inst = TextInstance(
                    id=str(obj["id"]), tokens=tuple(tokens),
                    head=_parse_span(obj, "head", lineno),
                    tail=_parse_span(obj, "tail", lineno),
                    label=obj.get("label"),
                )
            except CorpusFormatError as exc:
                raise CorpusFormatError(f"line {lineno}: {exc}") from exc
            out.append(inst)
    return out


def load_encoder(name_or_path: str, instances: Sequence[TextInstance], marker_seed: int = 0):
    """Load tokenizer + model and register every marker the corpus needs.

    New marker embeddings are initialized under a fixed torch seed and the
    model is left in eval mode; nothing is ever trained.
    """
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(name_or_path)
    model = AutoModel.from_pretrained(name_or_path)
    markers = sorted({m for inst in instances for m in inst.marker_tokens()})
    added = tokenizer.add_tokens(markers)
    if added:
        torch.manual_seed(marker_seed)
        model.resize_token_embeddings(len(tokenizer))
    model.eval()
    return tokenizer, model


def _first_position(row: torch.Tensor, token_id: int) -> int | None:
    hits = (row == token_id).nonzero(as_tuple=True)[0]
    return int(hits[0]) if len(hits) else None


@dataclass
class Extraction:
    instance: TextInstance
    vector: np.ndarray
    e1_position: int
    e2_position: int


def run_extraction(
    instances: Sequence[TextInstance],
    tokenizer,
    model,
    batch_size: int = 16,
    max_length: int = 128,
) -> Iterator[Extraction]:
    """Yield one relation vector per instance, skipping (and logging) any
    instance whose markers fall outside the encoder length limit."""
    hidden_size = model.config.hidden_size
    for start in range(0, len(instances), batch_size):
        batch = instances[start:start + batch_size]
        enc = tokenizer([inst.marked_tokens() for inst in batch],
                        is_split_into_words=True, padding=True,
                        truncation=True, max_length=max_length,
                        return_tensors="pt")
        with torch.no_grad():
            hidden = model(**enc).last_hidden_state
        for i, inst in enumerate(batch):
            ids_row = enc["input_ids"][i]
            p1 = _first_position(ids_row, tokenizer.convert_tokens_to_ids(inst.open_e1))
            p2 = _first_position(ids_row, tokenizer.convert_tokens_to_ids(inst.open_e2))
            if p1 is None or p2 is None:
                logger.warning("skipping %r: entity marker truncated at max_length=%d",
                               inst.id, max_length)
                continue
            vec = torch.cat([hidden[i, p1], hidden[i, p2]]).numpy().astype(np.float64)
            assert vec.shape == (2 * hidden_size,)
            yield Extraction(instance=inst, vector=vec, e1_position=p1, e2_position=p2)


def extract_file(
    input_path: str | Path,
    output_path: str | Path,
    encoder: str,
    batch_size: int = 16,
    max_length: int = 128,
    marker_seed: int = 0,
) -> int:
    """Corpus JSONL in, embedding JSONL out; returns the number of instances written."""
    instances = read_corpus(input_path)
    tokenizer, model = load_encoder(encoder, instances, marker_seed=marker_seed)
    written = 0
    with open(output_path, "w", encoding="utf-8") as fh:
        for result in run_extraction(instances, tokenizer, model,
                                     batch_size=batch_size, max_length=max_length):
            fh.write(json.dumps({
                "id": result.instance.id,
                "vec": result.vector.tolist(),
                "label": result.instance.label,
            }) + "\n")
            written += 1
    logger.info("wrote %d/%d instances to %s", written, len(instances), output_path)
    return written
