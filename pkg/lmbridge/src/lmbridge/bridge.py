"""Word-level attention export from a pre-trained masked language model.

For every corpus sentence (truncated to 64 words) the model runs once in
deterministic eval mode; attention maps from the first L layers are reduced
from subword to word resolution and written to an attention archive.

Subword-to-word aggregation: attention mass is summed over a target word's
subword columns and averaged over a source word's subword rows; special
tokens are dropped and every row is renormalized to sum to 1.  Sentences the
tokenizer cannot align word-for-word are skipped and recorded in the
manifest, never silently dropped.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .archive import write_archive
from .corpusio import CorpusSentence, load_sentences

DEFAULT_MODEL_ID = "roberta-base"
DEFAULT_LAYERS = 3
MAX_SENTENCE_WORDS = 64

TOKENIZER_NOTES = (
    "words are lowercased corpus tokens encoded with is_split_into_words; "
    "attention is summed over target subword columns, averaged over source "
    "subword rows, special tokens dropped, rows renormalized to 1"
)


class AlignmentError(ValueError):
    """A sentence's words could not be aligned with the model's subwords."""


@dataclass
class ExportManifest:
    model_id: str
    layer_indices: List[int]
    n_heads: int
    tokenizer_notes: str
    sentence_count: int
    truncated_count: int
    skipped: List[Dict[str, object]] = field(default_factory=list)
    archive_crc32: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")


def aggregate_to_words(attention: np.ndarray, word_ids: Sequence[Optional[int]], n_words: int) -> np.ndarray:
    """Reduce (L, H, T, T) subword attention to (L, H, N, N) word attention."""
    t = attention.shape[-1]
    assign = np.zeros((t, n_words), dtype=np.float64)
    for pos, word in enumerate(word_ids):
        if word is not None:
            assign[pos, word] = 1.0
    counts = assign.sum(axis=0)
    if np.any(counts == 0):
        raise AlignmentError("word with no subwords")
    columns_summed = attention.astype(np.float64) @ assign
    rows_averaged = np.einsum("nt,lhtm->lhnm", (assign / counts).T, columns_summed)
    row_sums = rows_averaged.sum(axis=-1, keepdims=True)
    if np.any(row_sums <= 0.0):
        raise AlignmentError("row with no attention mass after aggregation")
    return (rows_averaged / row_sums).astype(np.float32)


def _encode_sentence(tokenizer, words: Tuple[str, ...], max_subwords: int):
    enc = tokenizer(list(words), is_split_into_words=True, return_tensors="pt")
    word_ids = enc.word_ids(0)
    if enc["input_ids"].shape[1] > max_subwords:
        raise AlignmentError(f"sentence expands to {enc['input_ids'].shape[1]} subwords (limit {max_subwords})")
    aligned = {w for w in word_ids if w is not None}
    if aligned != set(range(len(words))):
        raise AlignmentError("tokenizer dropped or merged words")
    return enc, word_ids


def export_attention(
    corpus_path,
    out_archive,
    model_id: str = DEFAULT_MODEL_ID,
    layers: int = DEFAULT_LAYERS,
    manifest_path=None,
    batch_size: int = 8,
    device: str = "cpu",
) -> ExportManifest:
    """Run one inference pass over the corpus and archive word-level attention.

    ``batch_size`` only sets how many sentences are grouped per no-grad step;
    each sentence is evaluated independently, so neither it nor ``device``
    can change the exported values.
    """
    import torch
    from transformers import AutoModel, AutoTokenizer

    if layers < 1:
        raise ValueError("layers must be >= 1")
    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModel.from_pretrained(model_id, attn_implementation="eager")
    model.to(device)
    model.eval()
    if model.config.num_hidden_layers < layers:
        raise ValueError(
            f"model has {model.config.num_hidden_layers} layers, need at least {layers}"
        )
    n_heads = model.config.num_attention_heads
    max_subwords = int(min(tokenizer.model_max_length, model.config.max_position_embeddings))

    sentences = load_sentences(corpus_path)
    truncated = 0
    skipped: List[Dict[str, object]] = []
    exported = 0

    def tensors():
        nonlocal truncated, exported
        for start in range(0, len(sentences), max(1, batch_size)):
            chunk = sentences[start : start + max(1, batch_size)]
            with torch.no_grad():
                for sent in chunk:
                    words = sent.words
                    if len(words) > MAX_SENTENCE_WORDS:
                        words = words[:MAX_SENTENCE_WORDS]
                        truncated += 1
                    try:
                        enc, word_ids = _encode_sentence(tokenizer, words, max_subwords)
                    except AlignmentError as exc:
                        skipped.append(
                            {"doc_id": sent.doc_id, "sent_idx": sent.sent_idx, "reason": str(exc)}
                        )
                        continue
                    out = model(
                        input_ids=enc["input_ids"].to(device),
                        attention_mask=enc["attention_mask"].to(device),
                        output_attentions=True,
                    )
                    stacked = torch.stack(out.attentions[:layers])[:, 0].cpu().numpy()
                    values = aggregate_to_words(stacked, word_ids, len(words))
                    exported += 1
                    yield sent.doc_id, sent.sent_idx, values

    write_archive(out_archive, tensors())
    with open(out_archive, "rb") as fh:
        crc = zlib.crc32(fh.read()) & 0xFFFFFFFF

    manifest = ExportManifest(
        model_id=model_id,
        layer_indices=list(range(layers)),
        n_heads=n_heads,
        tokenizer_notes=TOKENIZER_NOTES,
        sentence_count=exported,
        truncated_count=truncated,
        skipped=skipped,
        archive_crc32=crc,
    )
    if manifest_path is not None:
        manifest.write(manifest_path)
    return manifest
