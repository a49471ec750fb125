"""Entity-marker relation embedding extraction."""

from .extract import (
    CorpusFormatError,
    Extraction,
    Span,
    TextInstance,
    extract_file,
    load_encoder,
    read_corpus,
    run_extraction,
)

__version__ = "0.1.0"

__all__ = [
    "CorpusFormatError",
    "Extraction",
    "Span",
    "TextInstance",
    "extract_file",
    "load_encoder",
    "read_corpus",
    "run_extraction",
]
