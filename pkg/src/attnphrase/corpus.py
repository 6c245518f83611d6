"""Corpus loading, sentence splitting, tokenization and the stopword predicate.

Documents are JSON Lines records with ``id`` and ``text`` keys.  Tokenization
is deliberately simple and fully deterministic: lowercase, whitespace split,
leading/trailing punctuation detached as separate tokens, internal hyphens and
apostrophes kept inside a word.  Sentences are split on terminal ``.!?``
followed by whitespace and an uppercase letter or digit, with a small
abbreviation list suppressing false splits.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Iterator, List, Optional, Sequence


class CorpusError(ValueError):
    """Raised for malformed corpus files (bad line, duplicate id)."""


@dataclass(frozen=True)
class SentenceTokens:
    """One tokenized sentence plus the offset of its first word in the document."""

    words: tuple
    doc_offset: int

    def __len__(self) -> int:
        return len(self.words)


@dataclass
class Document:
    id: str
    raw_text: str
    sentences: List[SentenceTokens] = field(default_factory=list)

    @property
    def word_sequence(self) -> List[str]:
        """All words of the document in order (sentence concatenation)."""
        out: List[str] = []
        for sent in self.sentences:
            out.extend(sent.words)
        return out

    @property
    def n_words(self) -> int:
        return sum(len(s) for s in self.sentences)


# Abbreviations that must not terminate a sentence.
_ABBREVIATIONS = ("e.g.", "i.e.", "et al.", "fig.", "eq.")

_SENT_BOUNDARY = re.compile(r"([.!?])(\s+)(?=[A-Z0-9])")

# Characters stripped off token edges as standalone punctuation tokens.
_EDGE_PUNCT = set("!\"#$%&'()*+,./:;<=>?@[\\]^_`{|}~-")
# Kept inside a word when flanked by word characters.
_INTERNAL_OK = set("-'")


def _split_sentences(raw_text: str) -> List[str]:
    """Split raw text into sentence strings (terminal punctuation kept)."""
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
    """Split one whitespace-delimited chunk into word and punctuation tokens."""
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
    """Tokenize a single sentence string into lowercased word tokens."""
    tokens: List[str] = []
    for chunk in text.lower().split():
        tokens.extend(_tokenize_chunk(chunk))
    return tokens


def tokenize_and_split(raw_text: str) -> List[SentenceTokens]:
    """Deterministically split text into sentences of lowercased word tokens."""
    sentences: List[SentenceTokens] = []
    offset = 0
    for sent_text in _split_sentences(raw_text):
        words = tokenize_words(sent_text)
        if not words:
            continue
        sentences.append(SentenceTokens(words=tuple(words), doc_offset=offset))
        offset += len(words)
    return sentences


def document_from_text(doc_id: str, text: str) -> Document:
    return Document(id=doc_id, raw_text=text, sentences=tokenize_and_split(text))


def load_corpus(path, fmt: str = "jsonl") -> List[Document]:
    """Load a JSON Lines corpus file into Documents, order preserved."""
    if fmt != "jsonl":
        raise CorpusError(f"unknown corpus format: {fmt!r}")
    docs: List[Document] = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict) or "id" not in rec or "text" not in rec:
                raise CorpusError(f"line {lineno}: record must have 'id' and 'text' keys")
            doc_id = rec["id"]
            if not isinstance(doc_id, str) or not isinstance(rec["text"], str):
                raise CorpusError(f"line {lineno}: 'id' and 'text' must be strings")
            if doc_id in seen:
                raise CorpusError(f"line {lineno}: duplicate document id {doc_id!r}")
            seen.add(doc_id)
            docs.append(document_from_text(doc_id, rec["text"]))
    return docs


def write_corpus(path, docs: Iterable[Document]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps({"id": doc.id, "text": doc.raw_text}) + "\n")


class StopwordList:
    """Set-backed stopword predicate, loadable from a one-word-per-line file."""

    def __init__(self, words: Iterable[str]):
        self._words = frozenset(w.lower() for w in words)

    @classmethod
    def from_file(cls, path) -> "StopwordList":
        words = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line and not line.startswith("#"):
                    words.append(line)
        return cls(words)

    @classmethod
    def bundled(cls) -> "StopwordList":
        text = resources.files("attnphrase.data").joinpath("stopwords.txt").read_text("utf-8")
        words = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        return cls(words)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._words

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._words))

    def __len__(self) -> int:
        return len(self._words)


_DEFAULT_STOPWORDS: Optional[StopwordList] = None


def default_stopwords() -> StopwordList:
    global _DEFAULT_STOPWORDS
    if _DEFAULT_STOPWORDS is None:
        _DEFAULT_STOPWORDS = StopwordList.bundled()
    return _DEFAULT_STOPWORDS


def is_stopword(word: str, stopwords: Optional[StopwordList] = None) -> bool:
    """True iff the lowercased word is in the stopword list (bundled by default)."""
    if stopwords is None:
        stopwords = default_stopwords()
    return word in stopwords
