"""Evaluation: corpus-level phrase ranking, document-level keyphrase
extraction (candidate recall + TF-IDF-ranked F1@10) and sentence-level span
tagging micro P/R/F1.

Phrase matching everywhere is on normalized surface forms: lowercased,
tokenizer-normalized, space-joined.
"""

from __future__ import annotations

import json
import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .corpus import Document, tokenize_words
from .tagger import Prediction


@dataclass
class EvalReport:
    task: str  # "ranking" | "keyphrase" | "tagging"
    metrics: Dict[str, float]
    n_items: Dict[str, int]
    config: Dict[str, object] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "task": self.task,
                "metrics": self.metrics,
                "n_items": self.n_items,
                "config": self.config,
                "flags": self.flags,
            },
            sort_keys=True,
            indent=2,
        )

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")


def normalize_phrase(phrase: str) -> str:
    return " ".join(tokenize_words(phrase))


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


# ---------------------------------------------------------------------------
# Task I: corpus-level phrase ranking


@dataclass(frozen=True)
class RankedPhrase:
    phrase: str
    score: float  # mean logit over all occurrences
    count: int


def rank_phrases_global(
    predictions: Iterable[Prediction],
    docs_by_id: Dict[str, Document],
) -> List[RankedPhrase]:
    """Rank predicted phrases by the mean logit over all their occurrences.

    Ties break by higher occurrence count, then lexicographically.
    """
    logits: Dict[str, List[float]] = defaultdict(list)
    for pred in predictions:
        doc = docs_by_id.get(pred.doc_id)
        if doc is None:
            raise KeyError(f"prediction references unknown document {pred.doc_id!r}")
        words = doc.sentences[pred.span.sent_idx].words
        surface = " ".join(words[pred.span.start : pred.span.end]).lower()
        logits[surface].append(pred.logit)
    ranked = [
        RankedPhrase(phrase=s, score=sum(ls) / len(ls), count=len(ls)) for s, ls in logits.items()
    ]
    ranked.sort(key=lambda r: (-r.score, -r.count, r.phrase))
    return ranked


def sample_for_annotation(
    ranked: Sequence[RankedPhrase], top_k: int, n_sample: int = 200, seed: int = 0
) -> List[str]:
    """Seeded random sample of phrases from the top-k of a rank list."""
    pool = [r.phrase for r in ranked[:top_k]]
    rng = random.Random(seed)
    if len(pool) <= n_sample:
        return pool
    return rng.sample(pool, n_sample)


def read_annotations(path) -> Dict[str, int]:
    """Annotation file: `phrase<TAB>0|1`, one judgement per line."""
    out: Dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in ("0", "1"):
                raise ValueError(f"annotation line {lineno}: expected 'phrase<TAB>0|1'")
            out[parts[0]] = int(parts[1])
    return out


def precision_from_annotations(sample: Sequence[str], annotations: Dict[str, int]) -> EvalReport:
    """Human-judged precision of an annotated phrase sample (never fabricated)."""
    judged = [annotations[p] for p in sample if p in annotations]
    if not judged:
        raise ValueError("no sampled phrase has an annotation")
    precision = sum(judged) / len(judged)
    return EvalReport(
        task="ranking",
        metrics={"precision": precision},
        n_items={"sampled": len(sample), "judged": len(judged)},
    )


# ---------------------------------------------------------------------------
# Task II: document-level keyphrase extraction


@dataclass
class DocCandidates:
    doc_id: str
    tf: Counter  # phrase -> occurrence count in the document
    first_pos: Dict[str, Tuple[int, int]]  # phrase -> earliest (sent_idx, start)


def collect_candidates(predictions: Iterable[Prediction], docs_by_id: Dict[str, Document]) -> Dict[str, DocCandidates]:
    # every corpus document gets an entry, even with zero predictions
    by_doc: Dict[str, DocCandidates] = {
        doc_id: DocCandidates(doc_id, Counter(), {}) for doc_id in docs_by_id
    }
    for pred in predictions:
        doc = docs_by_id.get(pred.doc_id)
        if doc is None:
            raise KeyError(f"prediction references unknown document {pred.doc_id!r}")
        words = doc.sentences[pred.span.sent_idx].words
        surface = " ".join(words[pred.span.start : pred.span.end]).lower()
        cand = by_doc.setdefault(pred.doc_id, DocCandidates(pred.doc_id, Counter(), {}))
        cand.tf[surface] += 1
        pos = (pred.span.sent_idx, pred.span.start)
        if surface not in cand.first_pos or pos < cand.first_pos[surface]:
            cand.first_pos[surface] = pos
    return by_doc


@dataclass
class CorpusStats:
    n_docs: int
    df: Counter


def corpus_stats(candidates: Dict[str, DocCandidates], n_docs: Optional[int] = None) -> CorpusStats:
    df = Counter()
    for cand in candidates.values():
        for phrase in cand.tf:
            df[phrase] += 1
    return CorpusStats(n_docs=n_docs if n_docs is not None else len(candidates), df=df)


def tfidf_rank_document(cand: DocCandidates, stats: CorpusStats, top_k: int = 10) -> List[Tuple[str, float]]:
    """score = tf * (log((1+M)/(1+df)) + 1); ties by earlier first occurrence."""
    scored = []
    for phrase, tf in cand.tf.items():
        idf = math.log((1 + stats.n_docs) / (1 + stats.df[phrase])) + 1.0
        scored.append((phrase, tf * idf))
    scored.sort(key=lambda ps: (-ps[1], cand.first_pos[ps[0]]))
    return scored[:top_k]


def read_gold_keyphrases(path) -> Dict[str, List[str]]:
    gold: Dict[str, List[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            gold[rec["id"]] = [normalize_phrase(p) for p in rec["keyphrases"]]
    return gold


def evaluate_keyphrase(
    candidates: Dict[str, DocCandidates],
    gold: Dict[str, List[str]],
    stats: Optional[CorpusStats] = None,
    top_k: int = 10,
) -> EvalReport:
    """Macro candidate recall and macro F1@top_k of the TF-IDF ranking."""
    missing = sorted(set(gold) - set(candidates))
    if missing:
        raise ValueError(f"gold document ids absent from predictions: {missing[:10]}")
    docs = sorted(gold)
    if stats is None:
        stats = corpus_stats(candidates)
    recalls, f1s = [], []
    for doc_id in docs:
        gold_set = set(gold[doc_id])
        if not gold_set:
            continue
        cand = candidates[doc_id]
        cand_set = set(cand.tf)
        recalls.append(len(gold_set & cand_set) / len(gold_set))
        top = [p for p, _ in tfidf_rank_document(cand, stats, top_k)]
        hits = len(set(top) & gold_set)
        p = hits / len(top) if top else 0.0
        r = hits / len(gold_set)
        f1s.append(_f1(p, r))
    if not recalls:
        raise ValueError("every shared document has an empty gold keyphrase set")
    return EvalReport(
        task="keyphrase",
        metrics={
            "recall": sum(recalls) / len(recalls),
            "f1_at_10": sum(f1s) / len(f1s),
        },
        n_items={"documents": len(recalls)},
        config={"top_k": top_k, "tfidf": "tf * (log((1+M)/(1+df)) + 1)"},
    )


# ---------------------------------------------------------------------------
# Task III: sentence-level span tagging


def read_gold_tagging(path) -> Set[Tuple[str, int, int, int]]:
    gold: Set[Tuple[str, int, int, int]] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            for start, end in rec["spans"]:
                gold.add((rec["id"], rec["sent_idx"], start, end))
    return gold


def evaluate_tagging(
    predicted: Iterable[Tuple[str, int, int, int]],
    gold: Iterable[Tuple[str, int, int, int]],
) -> EvalReport:
    """Micro P/R/F1 with exact span matching, pooled over all sentences."""
    pred_set = set(predicted)
    gold_set = set(gold)
    tp = len(pred_set & gold_set)
    flags = []
    if not pred_set:
        precision = 0.0
        flags.append("no_predictions")
    else:
        precision = tp / len(pred_set)
    recall = tp / len(gold_set) if gold_set else 0.0
    if not gold_set:
        flags.append("no_gold")
    return EvalReport(
        task="tagging",
        metrics={"precision": precision, "recall": recall, "f1": _f1(precision, recall)},
        n_items={"predicted": len(pred_set), "gold": len(gold_set), "matched": tp},
        flags=flags,
    )


def predictions_to_span_keys(predictions: Iterable[Prediction]) -> Set[Tuple[str, int, int, int]]:
    return {(p.doc_id, p.span.sent_idx, p.span.start, p.span.end) for p in predictions}
