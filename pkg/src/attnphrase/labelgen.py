"""Silver label generation.

Positive labels are "core phrases": maximal contiguous word patterns that
repeat within a single document at least ``min_freq`` times, after boundary
stopword / punctuation / numeric filtering.  Negatives are sampled uniformly
from the remaining spans, one per positive.  A gazetteer matcher provides the
distant-supervision baseline labels.

Occurrences are counted over the whole document word sequence (patterns may
cross sentence boundaries while counting), but only occurrences fully inside
one sentence are emitted as labels.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .corpus import Document, StopwordList, default_stopwords

POSITIVE = "pos"
NEGATIVE = "neg"


@dataclass(frozen=True, order=True)
class Span:
    """A word-index interval [start, end) inside one sentence of a document."""

    sent_idx: int
    start: int
    end: int
    words: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.end - self.start < 2:
            raise ValueError(f"span must cover at least two words: {self}")
        if self.words and len(self.words) != self.end - self.start:
            raise ValueError(f"word count does not match span bounds: {self}")

    @property
    def length(self) -> int:
        return self.end - self.start

    @property
    def key(self) -> Tuple[int, int, int]:
        return (self.sent_idx, self.start, self.end)


@dataclass(frozen=True, order=True)
class SpanLabel:
    doc_id: str
    span: Span
    polarity: str  # "pos" | "neg"
    source: str  # "core" | "gazetteer" | "sampled"


def _is_numeric(token: str) -> bool:
    return token.isdigit()


def _is_punct(token: str) -> bool:
    return not any(ch.isalnum() for ch in token)


def pattern_is_valid(pattern: Sequence[str], stopwords: StopwordList) -> bool:
    """Boundary stopwords, punctuation tokens and numeric tokens disqualify."""
    if pattern[0] in stopwords or pattern[-1] in stopwords:
        return False
    return not any(_is_punct(tok) or _is_numeric(tok) for tok in pattern)


def _ngram_counts(words: Sequence[str], n: int) -> Counter:
    return Counter(tuple(words[i : i + n]) for i in range(len(words) - n + 1))


def frequent_patterns(
    words: Sequence[str],
    min_freq: int,
    k_max: int,
    stopwords: StopwordList,
) -> Set[Tuple[str, ...]]:
    """Maximal valid patterns of length 2..k_max occurring >= min_freq times.

    Maximality is tested among the valid (filter-passing) frequent patterns
    only, and only among patterns of length <= k_max.
    """
    candidates: Set[Tuple[str, ...]] = set()
    for n in range(2, k_max + 1):
        if n > len(words):
            break
        counts = _ngram_counts(words, n)
        frequent = [g for g, c in counts.items() if c >= min_freq]
        if not frequent:
            # no n-gram repeats at this length; longer ones cannot either
            break
        candidates.update(g for g in frequent if pattern_is_valid(g, stopwords))
    return prune_subpatterns(candidates)


def _is_subseq(short: Tuple[str, ...], long: Tuple[str, ...]) -> bool:
    n, m = len(short), len(long)
    return any(long[i : i + n] == short for i in range(m - n + 1))


def prune_subpatterns(patterns: Set[Tuple[str, ...]]) -> Set[Tuple[str, ...]]:
    """Drop every pattern that is a contiguous sub-sequence of another."""
    by_len = sorted(patterns, key=len)
    kept: Set[Tuple[str, ...]] = set()
    for p in by_len:
        if not any(len(q) > len(p) and _is_subseq(p, q) for q in patterns):
            kept.add(p)
    return kept


def mine_core_phrases(
    doc: Document,
    min_freq: int = 2,
    k_max: int = 6,
    stopwords: Optional[StopwordList] = None,
) -> Set[SpanLabel]:
    """Mine per-document core phrases and emit their in-sentence occurrences."""
    if min_freq < 2:
        raise ValueError("min_freq must be >= 2")
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    if stopwords is None:
        stopwords = default_stopwords()
    words = doc.word_sequence
    patterns = frequent_patterns(words, min_freq, k_max, stopwords)
    labels: Set[SpanLabel] = set()
    for sent_idx, sent in enumerate(doc.sentences):
        sw = sent.words
        for n in {len(p) for p in patterns}:
            for i in range(len(sw) - n + 1):
                if tuple(sw[i : i + n]) in patterns:
                    span = Span(sent_idx, i, i + n, tuple(sw[i : i + n]))
                    labels.add(SpanLabel(doc.id, span, POSITIVE, "core"))
    return labels


def enumerate_all_spans(doc: Document, k_max: int) -> List[Span]:
    """All candidate spans of length 2..k_max inside the document's sentences."""
    spans: List[Span] = []
    for sent_idx, sent in enumerate(doc.sentences):
        n_words = len(sent.words)
        for k in range(2, min(k_max, n_words) + 1):
            for i in range(n_words - k + 1):
                spans.append(Span(sent_idx, i, i + k, tuple(sent.words[i : i + k])))
    return spans


def derive_doc_seed(global_seed: int, doc_id: str) -> int:
    """Stable per-document seed so corpus-level runs are order-independent."""
    h = hashlib.blake2b(f"{global_seed}\x00{doc_id}".encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def sample_negatives(
    doc: Document,
    positives: Iterable[SpanLabel],
    k_max: int = 6,
    seed: int = 0,
) -> Set[SpanLabel]:
    """Draw as many negatives as positives, uniformly from non-positive spans."""
    positive_keys = {lab.span.key for lab in positives}
    pool = [s for s in enumerate_all_spans(doc, k_max) if s.key not in positive_keys]
    pool.sort(key=lambda s: s.key)
    n = min(len(positive_keys), len(pool))
    rng = random.Random(seed)
    chosen = rng.sample(pool, n) if n else []
    return {SpanLabel(doc.id, span, NEGATIVE, "sampled") for span in chosen}


def gazetteer_match(
    doc: Document,
    gazetteer: Iterable[str],
    k_max: int = 6,
) -> Set[SpanLabel]:
    """Context-agnostic dictionary matching, greedy longest-first.

    Gazetteer entries are tokenized with the corpus rules; only multi-word
    entries of length <= k_max can match.  Overlapping shorter matches are
    suppressed by the chosen longer ones (ties broken left to right).
    """
    from .corpus import tokenize_words

    entries: Set[Tuple[str, ...]] = set()
    for phrase in gazetteer:
        toks = tuple(tokenize_words(phrase))
        if 2 <= len(toks) <= k_max:
            entries.add(toks)
    labels: Set[SpanLabel] = set()
    for sent_idx, sent in enumerate(doc.sentences):
        sw = sent.words
        matches: List[Span] = []
        for n in {len(e) for e in entries}:
            for i in range(len(sw) - n + 1):
                if tuple(sw[i : i + n]) in entries:
                    matches.append(Span(sent_idx, i, i + n, tuple(sw[i : i + n])))
        matches.sort(key=lambda s: (-s.length, s.start))
        taken: List[Span] = []
        for m in matches:
            if all(m.end <= t.start or m.start >= t.end for t in taken):
                taken.append(m)
        labels.update(SpanLabel(doc.id, s, POSITIVE, "gazetteer") for s in taken)
    return labels


def merge_label_sets(*label_sets: Iterable[SpanLabel]) -> List[SpanLabel]:
    """Merge labels; a span that is both core and gazetteer is recorded as core."""
    source_rank = {"core": 0, "gazetteer": 1, "sampled": 2}
    best: Dict[Tuple[str, int, int, int], SpanLabel] = {}
    for labels in label_sets:
        for lab in labels:
            key = (lab.doc_id, *lab.span.key)
            prev = best.get(key)
            if prev is not None and prev.polarity != lab.polarity:
                raise ValueError(f"conflicting polarities for span {key}")
            if prev is None or source_rank[lab.source] < source_rank[prev.source]:
                best[key] = lab
    return sorted(best.values())


def _check_no_conflicts(labels: Sequence[SpanLabel]) -> None:
    seen: Dict[Tuple[str, int, int, int], str] = {}
    for lab in labels:
        key = (lab.doc_id, *lab.span.key)
        if key in seen and seen[key] != lab.polarity:
            raise ValueError(f"conflicting polarities for span {key}")
        seen[key] = lab.polarity


def write_labels(path, labels: Iterable[SpanLabel]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for lab in sorted(labels):
            fh.write(
                json.dumps(
                    {
                        "doc_id": lab.doc_id,
                        "sent_idx": lab.span.sent_idx,
                        "start": lab.span.start,
                        "end": lab.span.end,
                        "polarity": lab.polarity,
                        "source": lab.source,
                    }
                )
                + "\n"
            )


def read_labels(path) -> List[SpanLabel]:
    labels: List[SpanLabel] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            span = Span(rec["sent_idx"], rec["start"], rec["end"])
            labels.append(SpanLabel(rec["doc_id"], span, rec["polarity"], rec["source"]))
    _check_no_conflicts(labels)
    return labels
