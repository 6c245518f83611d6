import json
import zlib
from pathlib import Path

import numpy as np
import pytest

from lmbridge import (
    AlignmentError,
    aggregate_to_words,
    export_attention,
    load_sentences,
)
from lmbridge.cli import main as cli_main


@pytest.fixture
def gate(capsys):
    def _gate(name, ok, detail=""):
        verdict = "PASS" if ok else "FAIL"
        suffix = f" ({detail})" if detail else ""
        with capsys.disabled():
            print(f"[{verdict}] {name}{suffix}")
        assert ok, f"{name}{suffix}"

    return _gate


class TestAggregation:
    def test_hand_computed_two_words_three_subwords(self):
        # word 0 <- subword 1; word 1 <- subwords 2,3; specials at 0 and 4
        att = np.zeros((1, 1, 5, 5))
        att[0, 0] = [
            [0.2, 0.2, 0.2, 0.2, 0.2],
            [0.1, 0.3, 0.2, 0.2, 0.2],
            [0.0, 0.5, 0.2, 0.2, 0.1],
            [0.0, 0.1, 0.4, 0.4, 0.1],
            [0.2, 0.2, 0.2, 0.2, 0.2],
        ]
        word_ids = [None, 0, 1, 1, None]
        out = aggregate_to_words(att, word_ids, 2)
        # row for word 0: subword row 1 -> cols (0.3 | 0.2+0.2) -> renorm by 0.7
        assert out[0, 0, 0] == pytest.approx([0.3 / 0.7, 0.4 / 0.7])
        # row for word 1: mean of rows 2,3 -> (0.3 | 0.6) -> renorm by 0.9
        assert out[0, 0, 1] == pytest.approx([0.3 / 0.9, 0.6 / 0.9])

    def test_word_without_subwords_raises(self):
        att = np.full((1, 1, 3, 3), 1 / 3)
        with pytest.raises(AlignmentError):
            aggregate_to_words(att, [None, 0, None], 2)

    def test_rows_stochastic_on_random_input(self):
        rng = np.random.default_rng(0)
        att = rng.dirichlet(np.ones(8), size=(3, 4, 8)).reshape(3, 4, 8, 8)
        word_ids = [None, 0, 0, 1, 2, 2, 2, None]
        out = aggregate_to_words(att, word_ids, 3)
        assert out.shape == (3, 4, 3, 3)
        assert np.allclose(out.sum(axis=-1), 1.0, atol=1e-6)


class TestBridgeContract:
    def test_archive_consumable_by_the_tagging_pipeline(self, gate, tiny_model_dir, fixture_corpus, tmp_path):
        """20-sentence fixture -> archive with L=3, H=12, stochastic rows, taggable."""
        from attnphrase.attnfeat import ArchiveProvider, ArchiveReader
        from attnphrase.classifier import ModelCheckpoint, TrainConfig, init_params
        from attnphrase.corpus import load_corpus
        from attnphrase.tagger import OVERLAP, tag_corpus

        archive = tmp_path / "bridge.ucat"
        manifest = export_attention(
            fixture_corpus, archive, model_id=tiny_model_dir, manifest_path=tmp_path / "m.json"
        )
        docs = load_corpus(fixture_corpus)
        n_sentences = sum(len(d.sentences) for d in docs)

        shapes_ok, rows_ok = True, True
        reader = ArchiveReader(archive)
        try:
            for doc in docs:
                for sent_idx, sent in enumerate(doc.sentences):
                    tensor = reader.get(doc.id, sent_idx)
                    v = tensor.values
                    shapes_ok = shapes_ok and v.shape == (3, 12, len(sent.words), len(sent.words))
                    rows_ok = rows_ok and bool(
                        np.allclose(v.sum(axis=-1, dtype=np.float64), 1.0, atol=1e-4)
                    )
        finally:
            reader.close()

        ckpt = ModelCheckpoint(
            params=init_params(36, seed=0), config=TrainConfig(k_max=6), best_epoch=1, val_f1=0.0, n_channels=36
        )
        provider = ArchiveProvider(archive)
        try:
            predictions, skipped = tag_corpus(docs, provider, ckpt, 0.0, OVERLAP)
        finally:
            provider.close()

        gate(
            "bridge archive is readable and taggable by the primary pipeline",
            n_sentences == 20
            and manifest.sentence_count == 20
            and shapes_ok
            and rows_ok
            and skipped == 0
            and len(predictions) > 0,
            f"{manifest.sentence_count} sentences, {len(predictions)} predictions",
        )


class TestExport:
    def test_single_subword_sentence_is_identity(self, tiny_model_dir, tmp_path):
        """Words that are all single subwords: export == special-stripped raw map."""
        import torch
        from transformers import AutoModel, AutoTokenizer

        corpus = tmp_path / "one.jsonl"
        corpus.write_text(json.dumps({"id": "d", "text": "cities trap solar radiation"}) + "\n")
        archive = tmp_path / "one.ucat"
        export_attention(corpus, archive, model_id=tiny_model_dir)

        tokenizer = AutoTokenizer.from_pretrained(tiny_model_dir)
        model = AutoModel.from_pretrained(tiny_model_dir, attn_implementation="eager")
        model.eval()
        words = ["cities", "trap", "solar", "radiation"]
        enc = tokenizer(words, is_split_into_words=True, return_tensors="pt")
        assert enc["input_ids"].shape[1] == len(words) + 2  # precondition: no subword splits
        with torch.no_grad():
            out = model(**enc, output_attentions=True)
        raw = torch.stack(out.attentions[:3])[:, 0].numpy().astype(np.float64)
        stripped = raw[:, :, 1:-1, 1:-1]
        expected = (stripped / stripped.sum(axis=-1, keepdims=True)).astype(np.float32)

        from lmbridge.archive import archive_key

        got = read_payload(archive, archive_key("d", 0))
        assert np.array_equal(got, expected)

    def test_determinism_and_batch_size_invariance(self, tiny_model_dir, fixture_corpus, tmp_path):
        blobs = []
        for name, bsz in (("a", 8), ("b", 8), ("c", 1), ("d", 3)):
            archive = tmp_path / f"{name}.ucat"
            export_attention(fixture_corpus, archive, model_id=tiny_model_dir, batch_size=bsz)
            blobs.append(archive.read_bytes())
        assert all(b == blobs[0] for b in blobs[1:])

    def test_alignment_failure_is_skipped_and_recorded(self, tiny_model_dir, tmp_path):
        corpus = tmp_path / "c.jsonl"
        # U+200B is not whitespace, so it survives corpus tokenization as a
        # "word", but the model tokenizer normalizes it away -> no subwords
        corpus.write_text(
            json.dumps({"id": "d", "text": "cities trap ​ solar. Trees help a lot."}) + "\n"
        )
        archive = tmp_path / "c.ucat"
        manifest = export_attention(corpus, archive, model_id=tiny_model_dir)
        assert manifest.sentence_count == 1
        assert len(manifest.skipped) == 1
        assert manifest.skipped[0]["doc_id"] == "d" and manifest.skipped[0]["sent_idx"] == 0

    def test_manifest_records_provenance(self, tiny_model_dir, fixture_corpus, tmp_path):
        archive = tmp_path / "m.ucat"
        manifest_path = tmp_path / "manifest.json"
        rc = cli_main([
            "export", "--corpus", str(fixture_corpus), "--out", str(archive),
            "--manifest", str(manifest_path), "--model", tiny_model_dir, "--layers", "3",
        ])
        assert rc == 0
        data = json.loads(manifest_path.read_text())
        assert data["model_id"] == tiny_model_dir
        assert data["layer_indices"] == [0, 1, 2]
        assert data["n_heads"] == 12
        assert data["sentence_count"] == 20
        assert data["archive_crc32"] == zlib.crc32(archive.read_bytes()) & 0xFFFFFFFF
        assert "subword" in data["tokenizer_notes"]

    def test_too_few_model_layers_rejected(self, tiny_model_dir, fixture_corpus, tmp_path):
        with pytest.raises(ValueError, match="layers"):
            export_attention(fixture_corpus, tmp_path / "x.ucat", model_id=tiny_model_dir, layers=9)

    def test_long_sentence_truncated_to_64_words(self, tiny_model_dir, tmp_path):
        text = " ".join(["cities"] * 70)
        corpus = tmp_path / "long.jsonl"
        corpus.write_text(json.dumps({"id": "d", "text": text}) + "\n")
        archive = tmp_path / "long.ucat"
        manifest = export_attention(corpus, archive, model_id=tiny_model_dir)
        assert manifest.truncated_count == 1
        from lmbridge.archive import archive_key

        got = read_payload(archive, archive_key("d", 0))
        assert got.shape == (3, 12, 64, 64)


def read_payload(path, key):
    """Minimal reader for the archive format, for tests that avoid the consumer."""
    import struct

    blob = Path(path).read_bytes()
    magic, version, count = struct.unpack_from("<4sIQ", blob, 0)
    assert magic == b"UCAT" and version == 1
    pos = 16
    index = {}
    for _ in range(count):
        (key_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        k = blob[pos : pos + key_len]
        pos += key_len
        offset, length = struct.unpack_from("<QQ", blob, pos)
        pos += 16
        index[k] = (offset, length)
    offset, length = index[key]
    n, l, h, crc = struct.unpack_from("<HBBI", blob, offset)
    floats = blob[offset + 8 : offset + length]
    assert zlib.crc32(floats) & 0xFFFFFFFF == crc
    return np.frombuffer(floats, dtype="<f4").reshape(l, h, n, n)


class TestCorpusIO:
    def test_sentence_and_word_rules(self, tmp_path):
        corpus = tmp_path / "c.jsonl"
        corpus.write_text(json.dumps({"id": "d", "text": "The heat-island effect, e.g. at night. Trees help!"}) + "\n")
        sents = load_sentences(corpus)
        assert [s.sent_idx for s in sents] == [0, 1]
        assert sents[0].words == ("the", "heat-island", "effect", ",", "e.g", ".", "at", "night", ".")
        assert sents[1].words == ("trees", "help", "!")
