"""Bridge from a pre-trained masked LM to the attention-archive format."""

from .archive import archive_key, write_archive
from .bridge import (
    DEFAULT_LAYERS,
    DEFAULT_MODEL_ID,
    MAX_SENTENCE_WORDS,
    AlignmentError,
    ExportManifest,
    aggregate_to_words,
    export_attention,
)
from .corpusio import CorpusSentence, load_sentences, tokenize_words

__all__ = [
    "AlignmentError",
    "CorpusSentence",
    "DEFAULT_LAYERS",
    "DEFAULT_MODEL_ID",
    "ExportManifest",
    "MAX_SENTENCE_WORDS",
    "aggregate_to_words",
    "archive_key",
    "export_attention",
    "load_sentences",
    "tokenize_words",
    "write_archive",
]
