"""Apply a trained span classifier to sentences.

Enumerates all candidate spans up to k_max, scores them from the attention
crop, and either returns every span above threshold (overlap mode) or a
greedy non-overlapping subset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .attnfeat import MAX_SENTENCE_WORDS, extract_span_feature
from .classifier import ModelCheckpoint, forward_batch, pad_feature
from .corpus import Document, SentenceTokens
from .labelgen import Span

OVERLAP = "overlap"
GREEDY = "greedy-nonoverlap"


@dataclass(frozen=True)
class Prediction:
    doc_id: str
    span: Span
    probability: float
    logit: float


def enumerate_spans(sentence: SentenceTokens, k_max: int, sent_idx: int = 0) -> List[Span]:
    """All spans of length 2..min(k_max, N), ordered by (start, end)."""
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    n = len(sentence.words)
    spans = []
    for start in range(n):
        for end in range(start + 2, min(start + k_max, n) + 1):
            spans.append(Span(sent_idx, start, end, tuple(sentence.words[start:end])))
    return spans


def _greedy_decode(preds: List[Prediction]) -> List[Prediction]:
    # highest probability first; ties: longer span, then smaller start
    order = sorted(preds, key=lambda p: (-p.probability, -p.span.length, p.span.start))
    taken: List[Prediction] = []
    for p in order:
        if all(p.span.end <= t.span.start or p.span.start >= t.span.end for t in taken):
            taken.append(p)
    return sorted(taken, key=lambda p: (p.span.start, p.span.end))


def tag_sentence(
    doc_id: str,
    sent_idx: int,
    sentence: SentenceTokens,
    provider,
    checkpoint: ModelCheckpoint,
    threshold: float = 0.5,
    decode: str = OVERLAP,
) -> Tuple[List[Prediction], int]:
    """Score every candidate span of one sentence.

    Returns (predictions, number of spans skipped by the 64-word truncation).
    """
    if decode not in (OVERLAP, GREEDY):
        raise ValueError(f"unknown decode mode: {decode!r}")
    spans = enumerate_spans(sentence, checkpoint.config.k_max, sent_idx)
    if not spans:
        return [], 0
    tensor = provider.get(doc_id, sent_idx, sentence)
    usable = [s for s in spans if s.end <= min(tensor.n_words, MAX_SENTENCE_WORDS)]
    skipped = len(spans) - len(usable)
    if not usable:
        return [], skipped
    xs, masks = [], []
    for span in usable:
        feat = extract_span_feature(tensor, span)
        x, mask = pad_feature(feat.values.astype(np.float64), checkpoint.config.k_max)
        xs.append(x)
        masks.append(mask)
    probs, logits = forward_batch(checkpoint.params, np.stack(xs), np.stack(masks))
    preds = [
        Prediction(doc_id, span, float(p), float(l))
        for span, p, l in zip(usable, probs, logits)
        if p >= threshold
    ]
    if decode == GREEDY:
        preds = _greedy_decode(preds)
    else:
        preds.sort(key=lambda p: (p.span.start, p.span.end))
    return preds, skipped


def tag_corpus(
    docs: Sequence[Document],
    provider,
    checkpoint: ModelCheckpoint,
    threshold: float = 0.5,
    decode: str = OVERLAP,
) -> Tuple[List[Prediction], int]:
    predictions: List[Prediction] = []
    skipped = 0
    for doc in docs:
        for sent_idx, sentence in enumerate(doc.sentences):
            preds, n_skip = tag_sentence(
                doc.id, sent_idx, sentence, provider, checkpoint, threshold, decode
            )
            predictions.extend(preds)
            skipped += n_skip
    return predictions, skipped


def write_predictions(path, predictions: Iterable[Prediction]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in predictions:
            fh.write(
                json.dumps(
                    {
                        "doc_id": p.doc_id,
                        "sent_idx": p.span.sent_idx,
                        "start": p.span.start,
                        "end": p.span.end,
                        "prob": p.probability,
                        "logit": p.logit,
                    }
                )
                + "\n"
            )


def read_predictions(path) -> List[Prediction]:
    out: List[Prediction] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            span = Span(rec["sent_idx"], rec["start"], rec["end"])
            out.append(Prediction(rec["doc_id"], span, rec["prob"], rec["logit"]))
    return out
