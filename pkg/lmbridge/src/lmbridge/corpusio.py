"""Corpus-format contract: JSON Lines reading and word tokenization.

The bridge talks to the tagging pipeline only through files, so it carries
its own copy of the corpus text conventions: records are ``{"id", "text"}``
JSON Lines; words are lowercased whitespace chunks with leading/trailing
punctuation detached, internal hyphens/apostrophes kept; sentences split on
terminal ``.!?`` followed by whitespace and an uppercase letter or digit,
with a small abbreviation list suppressing false splits.  Archive keys are
word-indexed, so this tokenization must match the consumer's byte for byte.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import List, Tuple

_ABBREVIATIONS = ("e.g.", "i.e.", "et al.", "fig.", "eq.")
_SENT_BOUNDARY = re.compile(r"([.!?])(\s+)(?=[A-Z0-9])")
_EDGE_PUNCT = set("!\"#$%&'()*+,./:;<=>?@[\\]^_`{|}~-")


@dataclass(frozen=True)
class CorpusSentence:
    doc_id: str
    sent_idx: int
    words: Tuple[str, ...]


def _split_sentences(raw_text: str) -> List[str]:
    pieces: List[str] = []
    start = 0
    for m in _SENT_BOUNDARY.finditer(raw_text):
        end = m.end(1)
        prefix = raw_text[start:end].lower()
        if any(prefix.endswith(abbr) for abbr in _ABBREVIATIONS):
            continue
        pieces.append(raw_text[start:end])
        start = m.end(2)
    tail = raw_text[start:]
    if tail.strip():
        pieces.append(tail)
    return [p for p in pieces if p.strip()]


def _tokenize_chunk(chunk: str) -> List[str]:
    leading: List[str] = []
    trailing: List[str] = []
    i, j = 0, len(chunk)
    while i < j and chunk[i] in _EDGE_PUNCT:
        leading.append(chunk[i])
        i += 1
    while j > i and chunk[j - 1] in _EDGE_PUNCT:
        trailing.append(chunk[j - 1])
        j -= 1
    core = chunk[i:j]
    tokens = leading
    if core:
        tokens.append(core)
    tokens.extend(reversed(trailing))
    return tokens


def tokenize_words(text: str) -> List[str]:
    tokens: List[str] = []
    for chunk in text.lower().split():
        tokens.extend(_tokenize_chunk(chunk))
    return tokens


def load_sentences(path) -> List[CorpusSentence]:
    """Read a corpus file into per-sentence word tuples, order preserved."""
    sentences: List[CorpusSentence] = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"corpus line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict) or "id" not in rec or "text" not in rec:
                raise ValueError(f"corpus line {lineno}: record must have 'id' and 'text' keys")
            doc_id = rec["id"]
            if doc_id in seen:
                raise ValueError(f"corpus line {lineno}: duplicate document id {doc_id!r}")
            seen.add(doc_id)
            sent_idx = 0
            for sent_text in _split_sentences(rec["text"]):
                words = tokenize_words(sent_text)
                if not words:
                    continue
                sentences.append(CorpusSentence(doc_id, sent_idx, tuple(words)))
                sent_idx += 1
    return sentences
