import random

import numpy as np
import pytest

from attnphrase.attnfeat import SyntheticHashProvider
from attnphrase.classifier import ModelCheckpoint, TrainConfig, init_params
from attnphrase.corpus import SentenceTokens
from attnphrase.labelgen import Span
from attnphrase.tagger import (
    GREEDY,
    OVERLAP,
    Prediction,
    _greedy_decode,
    enumerate_spans,
    read_predictions,
    tag_sentence,
    write_predictions,
)
from oracles import brute_force_span_count


def sent(words):
    return SentenceTokens(words=tuple(words), doc_offset=0)


def make_checkpoint(k_max=4, c=36, seed=0):
    return ModelCheckpoint(
        params=init_params(c, seed=seed),
        config=TrainConfig(k_max=k_max, seed=seed),
        best_epoch=1,
        val_f1=0.0,
        n_channels=c,
    )


class TestEnumerateSpans:
    def test_count_n5_k3(self):
        spans = enumerate_spans(sent(["a", "b", "c", "d", "e"]), 3)
        assert len(spans) == 7  # 4 bigrams + 3 trigrams

    def test_single_word_empty(self):
        assert enumerate_spans(sent(["a"]), 4) == []

    def test_order_and_closed_form(self):
        rng = random.Random(1)
        for _ in range(50):
            n = rng.randint(0, 20)
            k_max = rng.randint(2, 20)
            spans = enumerate_spans(sent([f"w{i}" for i in range(n)]), k_max)
            expected = sum(max(0, n - k + 1) for k in range(2, min(k_max, n) + 1))
            assert len(spans) == expected == brute_force_span_count(n, k_max)
            assert spans == sorted(spans, key=lambda s: (s.start, s.end))

    def test_kmax_validation(self):
        with pytest.raises(ValueError):
            enumerate_spans(sent(["a", "b"]), 1)


class TestGreedyDecode:
    def test_hand_simulated_example(self):
        preds = [
            Prediction("d", Span(0, 0, 2), 0.9, 2.2),
            Prediction("d", Span(0, 1, 3), 0.8, 1.4),
            Prediction("d", Span(0, 3, 5), 0.7, 0.9),
        ]
        taken = _greedy_decode(preds)
        assert {(p.span.start, p.span.end) for p in taken} == {(0, 2), (3, 5)}

    def test_tie_break_longer_then_leftmost(self):
        preds = [
            Prediction("d", Span(0, 2, 4), 0.8, 1.0),
            Prediction("d", Span(0, 1, 4), 0.8, 1.0),  # longer wins the tie
        ]
        assert _greedy_decode(preds)[0].span.key == (0, 1, 4)
        preds = [
            Prediction("d", Span(0, 2, 4), 0.8, 1.0),
            Prediction("d", Span(0, 1, 3), 0.8, 1.0),  # same length: leftmost
        ]
        assert _greedy_decode(preds)[0].span.key == (0, 1, 3)


class TestTagSentence:
    def test_threshold_above_one_empty(self):
        s = sent([f"w{i}" for i in range(6)])
        preds, skipped = tag_sentence("d", 0, s, SyntheticHashProvider(0), make_checkpoint(), 1.01)
        assert preds == [] and skipped == 0

    def test_overlap_mode_keeps_overlaps(self):
        s = sent(["information", "extraction", "systems"])
        preds, _ = tag_sentence("d", 0, s, SyntheticHashProvider(0), make_checkpoint(), 0.0, OVERLAP)
        keys = {p.span.key for p in preds}
        # every candidate span is returned at threshold 0, overlaps included
        assert (0, 0, 2) in keys and (0, 0, 3) in keys and (0, 1, 3) in keys

    def test_greedy_subset_and_nonoverlapping(self):
        s = sent([f"w{i}" for i in range(10)])
        ckpt = make_checkpoint()
        provider = SyntheticHashProvider(0)
        overlap, _ = tag_sentence("d", 0, s, provider, ckpt, 0.3, OVERLAP)
        greedy, _ = tag_sentence("d", 0, s, provider, ckpt, 0.3, GREEDY)
        okeys = {p.span.key for p in overlap}
        gkeys = {p.span.key for p in greedy}
        assert gkeys <= okeys
        taken = sorted(gkeys)
        for a, b in zip(taken, taken[1:]):
            assert a[2] <= b[1]  # pairwise non-overlapping

    def test_threshold_monotonicity(self):
        s = sent([f"w{i}" for i in range(8)])
        ckpt = make_checkpoint()
        provider = SyntheticHashProvider(0)
        lo, _ = tag_sentence("d", 0, s, provider, ckpt, 0.4)
        hi, _ = tag_sentence("d", 0, s, provider, ckpt, 0.6)
        assert {p.span.key for p in hi} <= {p.span.key for p in lo}

    def test_probability_matches_sigmoid_of_logit(self):
        s = sent([f"w{i}" for i in range(6)])
        preds, _ = tag_sentence("d", 0, s, SyntheticHashProvider(0), make_checkpoint(), 0.0)
        for p in preds:
            assert abs(p.probability - 1.0 / (1.0 + np.exp(-p.logit))) < 1e-6

    def test_spans_beyond_truncation_counted(self):
        s = sent([f"w{i}" for i in range(70)])
        preds, skipped = tag_sentence("d", 0, s, SyntheticHashProvider(0), make_checkpoint(), 0.0)
        assert skipped > 0
        assert all(p.span.end <= 64 for p in preds)

    def test_determinism(self):
        s = sent([f"w{i}" for i in range(8)])
        ckpt = make_checkpoint()
        a, _ = tag_sentence("d", 0, s, SyntheticHashProvider(0), ckpt, 0.2)
        b, _ = tag_sentence("d", 0, s, SyntheticHashProvider(0), ckpt, 0.2)
        assert a == b

    def test_unknown_decode_mode(self):
        with pytest.raises(ValueError, match="decode"):
            tag_sentence("d", 0, sent(["a", "b"]), SyntheticHashProvider(0), make_checkpoint(), 0.5, "best")


class TestPredictionIO:
    def test_roundtrip(self, tmp_path):
        preds = [
            Prediction("d1", Span(0, 0, 2), 0.75, 1.0986122886681098),
            Prediction("d2", Span(3, 1, 4), 0.25, -1.0986122886681098),
        ]
        path = tmp_path / "preds.jsonl"
        write_predictions(path, preds)
        loaded = read_predictions(path)
        assert [(p.doc_id, p.span.key, p.probability, p.logit) for p in loaded] == [
            (p.doc_id, p.span.key, p.probability, p.logit) for p in preds
        ]
