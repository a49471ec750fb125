import json

import pytest
import torch


VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "alice", "works", "at", "acme", "corp",
    "bob", "visited", "paris", "in", "june",
    "the", "cat", "sat", "on", "mat",
]

HIDDEN_SIZE = 32


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """A miniature randomly initialized bidirectional encoder checkpoint,
    built offline: word-level WordPiece tokenizer plus a 2-layer model."""
    from tokenizers import Tokenizer
    from tokenizers.models import WordPiece
    from tokenizers.pre_tokenizers import WhitespaceSplit
    from tokenizers.processors import TemplateProcessing
    from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

    path = tmp_path_factory.mktemp("checkpoint")
    vocab = {w: i for i, w in enumerate(VOCAB)}
    tk = Tokenizer(WordPiece(vocab=vocab, unk_token="[UNK]"))
    tk.pre_tokenizer = WhitespaceSplit()
    tk.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]", pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])])
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=tk, unk_token="[UNK]", pad_token="[PAD]", cls_token="[CLS]",
        sep_token="[SEP]", mask_token="[MASK]")
    tokenizer.save_pretrained(path)

    config = BertConfig(
        vocab_size=len(VOCAB), hidden_size=HIDDEN_SIZE, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=64, max_position_embeddings=64)
    torch.manual_seed(1234)
    BertModel(config).save_pretrained(path)
    return str(path)


@pytest.fixture()
def corpus_file(tmp_path):
    """Three hand-built sentences; the third has the tail before the head."""
    rows = [
        {"id": "s1", "tokens": ["alice", "works", "at", "acme", "corp"],
         "head": {"start": 0, "end": 1, "type": "person"},
         "tail": {"start": 3, "end": 5, "type": "org"}, "label": "employer"},
        {"id": "s2", "tokens": ["bob", "visited", "paris", "in", "june"],
         "head": {"start": 0, "end": 1, "type": "person"},
         "tail": {"start": 2, "end": 3, "type": "city"}, "label": "visited"},
        {"id": "s3", "tokens": ["the", "cat", "sat", "on", "the", "mat"],
         "head": {"start": 5, "end": 6, "type": "object"},
         "tail": {"start": 1, "end": 2, "type": "animal"}, "label": None},
    ]
    path = tmp_path / "corpus.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path
