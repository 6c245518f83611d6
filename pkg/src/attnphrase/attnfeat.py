"""Attention tensors, span feature crops, the archive codec and synthetic providers.

An attention tensor holds word-level attention maps for one sentence, shaped
(L, H, N, N) with row-stochastic (layer, head, row) slices.  Span features are
square crops of the channel-flattened tensor (layer-major, head-minor order).

Providers produce tensors either from a binary archive file (written by an
external exporter) or synthetically: a hash provider derives logits from the
token surface, and a planted provider boosts within-span attention for known
spans, which gives a fully self-contained stand-in for a real language model.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import struct
import zlib
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .corpus import Document, SentenceTokens
from .labelgen import Span

MAX_SENTENCE_WORDS = 64
DEFAULT_LAYERS = 3
DEFAULT_HEADS = 12

ARCHIVE_MAGIC = b"UCAT"
ARCHIVE_VERSION = 1


class ArchiveError(Exception):
    """Base class for attention archive failures."""


class ArchiveVersionError(ArchiveError):
    pass


class ArchiveTruncatedError(ArchiveError):
    pass


class ArchiveChecksumError(ArchiveError):
    pass


class MissingKeyError(ArchiveError, KeyError):
    pass


@dataclass
class AttentionTensor:
    doc_id: str
    sent_idx: int
    values: np.ndarray  # (L, H, N, N) float32, rows sum to 1

    @property
    def sent_key(self) -> Tuple[str, int]:
        return (self.doc_id, self.sent_idx)

    @property
    def n_layers(self) -> int:
        return self.values.shape[0]

    @property
    def n_heads(self) -> int:
        return self.values.shape[1]

    @property
    def n_words(self) -> int:
        return self.values.shape[2]

    @property
    def n_channels(self) -> int:
        return self.n_layers * self.n_heads

    def validate(self, tol: float = 1e-4) -> None:
        v = self.values
        if v.ndim != 4 or v.shape[2] != v.shape[3]:
            raise ValueError(f"attention tensor must be (L, H, N, N), got {v.shape}")
        if v.dtype != np.float32:
            raise ValueError(f"attention tensor must be float32, got {v.dtype}")
        row_sums = v.sum(axis=3)
        if not np.all(np.abs(row_sums - 1.0) <= tol):
            worst = float(np.abs(row_sums - 1.0).max())
            raise ValueError(f"attention rows must sum to 1 (worst deviation {worst:.2e})")


@dataclass
class SpanFeature:
    span: Span
    values: np.ndarray  # (C, k, k) float32

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]


def extract_span_feature(tensor: AttentionTensor, span: Span) -> SpanFeature:
    """Crop the square attention block covered by the span, no renormalization.

    Channels are flattened layer-major, head-minor: channel c corresponds to
    layer c // H, head c % H.
    """
    k = span.end - span.start
    if k < 2:
        raise ValueError("span features are defined for multi-word spans only")
    if span.start < 0 or span.end > tensor.n_words:
        raise ValueError(
            f"span [{span.start}, {span.end}) out of bounds for sentence of "
            f"{tensor.n_words} words"
        )
    flat = tensor.values.reshape(tensor.n_channels, tensor.n_words, tensor.n_words)
    crop = flat[:, span.start : span.end, span.start : span.end].copy()
    return SpanFeature(span=span, values=crop)


# ---------------------------------------------------------------------------
# deterministic hashing helpers (vectorized, platform independent)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (x + _GOLDEN).astype(np.uint64)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _hash64(data: str) -> int:
    return int.from_bytes(hashlib.blake2b(data.encode("utf-8"), digest_size=8).digest(), "little")


def _uniform01(h: np.ndarray) -> np.ndarray:
    return (h >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)


class SyntheticHashProvider:
    """Deterministic attention from a seeded hash of the token surface."""

    name = "synthetic-hash"

    def __init__(self, seed: int = 0, n_layers: int = DEFAULT_LAYERS, n_heads: int = DEFAULT_HEADS):
        self.seed = seed
        self.n_layers = n_layers
        self.n_heads = n_heads

    def get(self, doc_id: str, sent_idx: int, sentence: SentenceTokens) -> AttentionTensor:
        words = list(sentence.words)[:MAX_SENTENCE_WORDS]
        n = len(words)
        if n == 0:
            raise ValueError("cannot compute attention for an empty sentence")
        token_ids = np.array(
            [_splitmix64(np.uint64((_hash64(w) + i) & 0xFFFFFFFFFFFFFFFF)) for i, w in enumerate(words)],
            dtype=np.uint64,
        )
        lh = np.arange(self.n_layers * self.n_heads, dtype=np.uint64)
        with np.errstate(over="ignore"):
            seed_mix = _splitmix64(np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF) + lh)
            # cell hash combines (seed, layer, head, row token+pos, column token+pos)
            pair = token_ids[None, :, None] + _GOLDEN * token_ids[None, None, :]
        h = _splitmix64(seed_mix[:, None, None] ^ _splitmix64(pair))
        logits = _uniform01(h) * 4.0
        values = _softmax_rows(logits).reshape(self.n_layers, self.n_heads, n, n)
        return AttentionTensor(doc_id=doc_id, sent_idx=sent_idx, values=values)


class PlantedAttentionProvider:
    """Seeded noise attention with boosted within-span mass for planted spans."""

    name = "synthetic-planted"

    def __init__(
        self,
        planted: Dict[Tuple[str, int], List[Tuple[int, int]]],
        delta: float,
        seed: int = 0,
        n_layers: int = DEFAULT_LAYERS,
        n_heads: int = DEFAULT_HEADS,
    ):
        self.planted = planted
        self.delta = float(delta)
        self.seed = seed
        self.n_layers = n_layers
        self.n_heads = n_heads

    @classmethod
    def from_params_file(cls, path) -> "PlantedAttentionProvider":
        with open(path, "r", encoding="utf-8") as fh:
            params = json.load(fh)
        planted: Dict[Tuple[str, int], List[Tuple[int, int]]] = {}
        for doc_id, by_sent in params["spans"].items():
            for sent_idx, spans in by_sent.items():
                planted[(doc_id, int(sent_idx))] = [tuple(s) for s in spans]
        return cls(
            planted,
            delta=params["delta"],
            seed=params["seed"],
            n_layers=params.get("n_layers", DEFAULT_LAYERS),
            n_heads=params.get("n_heads", DEFAULT_HEADS),
        )

    def get(self, doc_id: str, sent_idx: int, sentence: SentenceTokens) -> AttentionTensor:
        n = min(len(sentence.words), MAX_SENTENCE_WORDS)
        if n == 0:
            raise ValueError("cannot compute attention for an empty sentence")
        base = np.uint64(_hash64(f"{self.seed}\x00{doc_id}\x00{sent_idx}"))
        size = self.n_layers * self.n_heads * n * n
        with np.errstate(over="ignore"):
            offsets = base + np.arange(size, dtype=np.uint64)
        h = _splitmix64(offsets)
        logits = _uniform01(h).reshape(self.n_layers, self.n_heads, n, n)
        boost = np.zeros((n, n), dtype=np.float64)
        for start, end in self.planted.get((doc_id, sent_idx), []):
            end = min(end, n)
            if end - start >= 2:
                boost[start:end, start:end] = self.delta
        logits = logits + boost[None, None, :, :]
        values = _softmax_rows(logits).reshape(self.n_layers, self.n_heads, n, n)
        return AttentionTensor(doc_id=doc_id, sent_idx=sent_idx, values=values)


class ArchiveProvider:
    """File-backed provider reading tensors from an attention archive."""

    name = "archive"

    def __init__(self, path):
        self.reader = ArchiveReader(path)

    def get(self, doc_id: str, sent_idx: int, sentence: Optional[SentenceTokens] = None) -> AttentionTensor:
        return self.reader.get(doc_id, sent_idx)

    def close(self) -> None:
        self.reader.close()


def make_provider(name: str, seed: int = 0, archive_path=None, planted_params_path=None,
                  n_layers: int = DEFAULT_LAYERS, n_heads: int = DEFAULT_HEADS):
    if name == "synthetic-hash":
        return SyntheticHashProvider(seed=seed, n_layers=n_layers, n_heads=n_heads)
    if name == "synthetic-planted":
        if planted_params_path is None:
            raise ValueError("synthetic-planted provider needs a planted-params file")
        return PlantedAttentionProvider.from_params_file(planted_params_path)
    if name == "archive":
        if archive_path is None:
            raise ValueError("archive provider needs an archive path")
        return ArchiveProvider(archive_path)
    raise ValueError(f"unknown attention provider: {name!r}")


# ---------------------------------------------------------------------------
# archive codec
#
# Layout: magic "UCAT", version u32 LE, tensor count u64 LE; index records
# (key length u16, UTF-8 key "doc_id\x00sent_idx", payload offset u64, payload
# length u64); payload records (N u16, L u8, H u8, CRC32 u32 of the float
# payload, then L*H*N*N float32 LE row-major).

_HEADER = struct.Struct("<4sIQ")
_PAYLOAD_HEAD = struct.Struct("<HBBI")


def _archive_key(doc_id: str, sent_idx: int) -> bytes:
    return f"{doc_id}\x00{sent_idx}".encode("utf-8")


def write_archive(path, tensors: Iterable[AttentionTensor]) -> int:
    """Write tensors to an archive file; returns the tensor count.

    Payloads are streamed through a sidecar temp file so the index (which
    precedes the payload section) can be written with final offsets.
    """
    tmp_path = str(path) + ".payload.tmp"
    entries: List[Tuple[bytes, int, int]] = []  # key, rel offset, length
    rel = 0
    with open(tmp_path, "wb") as tmp:
        for tensor in tensors:
            tensor.validate()
            key = _archive_key(tensor.doc_id, tensor.sent_idx)
            payload = np.ascontiguousarray(tensor.values, dtype="<f4").tobytes()
            head = _PAYLOAD_HEAD.pack(
                tensor.n_words, tensor.n_layers, tensor.n_heads, zlib.crc32(payload) & 0xFFFFFFFF
            )
            tmp.write(head)
            tmp.write(payload)
            length = len(head) + len(payload)
            entries.append((key, rel, length))
            rel += length
    index_size = sum(2 + len(key) + 16 for key, _, _ in entries)
    payload_base = _HEADER.size + index_size
    try:
        with open(path, "wb") as out:
            out.write(_HEADER.pack(ARCHIVE_MAGIC, ARCHIVE_VERSION, len(entries)))
            for key, off, length in entries:
                out.write(struct.pack("<H", len(key)))
                out.write(key)
                out.write(struct.pack("<QQ", payload_base + off, length))
            with open(tmp_path, "rb") as tmp:
                while True:
                    chunk = tmp.read(1 << 20)
                    if not chunk:
                        break
                    out.write(chunk)
    finally:
        os.unlink(tmp_path)
    return len(entries)


class ArchiveReader:
    """Random-access reader; loads only the index, payloads on demand."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "rb")
        try:
            self._index = self._read_index()
        except Exception:
            self._fh.close()
            raise

    def _read_exact(self, n: int) -> bytes:
        data = self._fh.read(n)
        if len(data) != n:
            raise ArchiveTruncatedError(f"archive truncated: wanted {n} bytes, got {len(data)}")
        return data

    def _read_index(self) -> Dict[bytes, Tuple[int, int]]:
        header = self._read_exact(_HEADER.size)
        magic, version, count = _HEADER.unpack(header)
        if magic != ARCHIVE_MAGIC:
            raise ArchiveVersionError(f"not an attention archive (magic {magic!r})")
        if version != ARCHIVE_VERSION:
            raise ArchiveVersionError(f"unsupported archive version {version}")
        index: Dict[bytes, Tuple[int, int]] = {}
        for _ in range(count):
            (key_len,) = struct.unpack("<H", self._read_exact(2))
            key = self._read_exact(key_len)
            offset, length = struct.unpack("<QQ", self._read_exact(16))
            index[key] = (offset, length)
        return index

    def keys(self) -> List[Tuple[str, int]]:
        out = []
        for key in self._index:
            doc_id, _, sent_idx = key.decode("utf-8").rpartition("\x00")
            out.append((doc_id, int(sent_idx)))
        return out

    def __contains__(self, sent_key: Tuple[str, int]) -> bool:
        return _archive_key(*sent_key) in self._index

    def __len__(self) -> int:
        return len(self._index)

    def get(self, doc_id: str, sent_idx: int) -> AttentionTensor:
        key = _archive_key(doc_id, sent_idx)
        if key not in self._index:
            raise MissingKeyError(f"sentence not in archive: doc_id={doc_id!r} sent_idx={sent_idx}")
        offset, length = self._index[key]
        self._fh.seek(offset)
        record = self._read_exact(length)
        n, l, h, crc = _PAYLOAD_HEAD.unpack_from(record, 0)
        payload = record[_PAYLOAD_HEAD.size :]
        expected = l * h * n * n * 4
        if len(payload) != expected:
            raise ArchiveTruncatedError(
                f"payload for {doc_id!r}/{sent_idx} has {len(payload)} bytes, expected {expected}"
            )
        if zlib.crc32(payload) & 0xFFFFFFFF != crc:
            raise ArchiveChecksumError(f"checksum mismatch for doc_id={doc_id!r} sent_idx={sent_idx}")
        values = np.frombuffer(payload, dtype="<f4").reshape(l, h, n, n).copy()
        return AttentionTensor(doc_id=doc_id, sent_idx=sent_idx, values=values)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def export_corpus_attention(docs: Sequence[Document], provider, out_path) -> Tuple[int, int]:
    """Run a provider over every sentence and archive the tensors.

    Returns (sentences written, sentences truncated to the 64-word limit).
    """
    truncated = 0

    def tensors():
        nonlocal truncated
        for doc in docs:
            for sent_idx, sent in enumerate(doc.sentences):
                if len(sent.words) > MAX_SENTENCE_WORDS:
                    truncated += 1
                yield provider.get(doc.id, sent_idx, sent)

    count = write_archive(out_path, tensors())
    return count, truncated


# ---------------------------------------------------------------------------
# synthetic corpus generation


def generate_synthetic_corpus(
    n_docs: int,
    vocab_size: int = 200,
    phrase_bank_size: int = 40,
    seed: int = 0,
    delta: float = 4.0,
    n_layers: int = DEFAULT_LAYERS,
    n_heads: int = DEFAULT_HEADS,
):
    """Build a corpus of random sentences with repeated planted phrases.

    Returns (corpus records, gold span records, planted parameters).  Corpus
    records are {"id", "text"} dicts whose text tokenizes back exactly to the
    planned words; every injected phrase occurrence is listed in the gold
    records and in the planted-attention parameters.
    """
    if phrase_bank_size < 1:
        raise ValueError("phrase_bank_size must be >= 1")
    rng = random.Random(seed)
    filler = [f"w{i}" for i in range(vocab_size)]
    # phrase tokens are disjoint from filler so injected phrases are the only
    # reliably repeating patterns
    phrase_alphabet = [f"p{i}" for i in range(max(8, 4 * phrase_bank_size))]
    bank: List[Tuple[str, ...]] = []
    seen = set()
    while len(bank) < phrase_bank_size:
        length = rng.randint(2, 4)
        phrase = tuple(rng.choice(phrase_alphabet) for _ in range(length))
        if phrase not in seen and len(set(phrase)) == len(phrase):
            seen.add(phrase)
            bank.append(phrase)

    corpus_records = []
    gold_records = []
    planted: Dict[str, Dict[int, List[Tuple[int, int]]]] = {}
    for d in range(n_docs):
        doc_id = f"syn{d:04d}"
        n_sents = rng.randint(4, 7)
        sentences = [[rng.choice(filler) for _ in range(rng.randint(8, 14))] for _ in range(n_sents)]
        chosen = rng.sample(bank, rng.randint(1, min(3, len(bank))))
        spans_by_sent: Dict[int, List[Tuple[int, int]]] = {}
        for phrase in chosen:
            for _ in range(rng.randint(2, 3)):
                s = rng.randrange(n_sents)
                pos = rng.randint(0, len(sentences[s]))
                sentences[s] = sentences[s][:pos] + list(phrase) + sentences[s][pos:]
        # recover every occurrence (insertions may shift earlier ones)
        for s, words in enumerate(sentences):
            spans = []
            for phrase in chosen:
                k = len(phrase)
                for i in range(len(words) - k + 1):
                    if tuple(words[i : i + k]) == phrase:
                        spans.append((i, i + k))
            if spans:
                spans_by_sent[s] = sorted(spans)
        text = " ".join(
            " ".join([words[0].capitalize()] + words[1:]) + " ." for words in sentences
        )
        corpus_records.append({"id": doc_id, "text": text})
        for s in sorted(spans_by_sent):
            gold_records.append({"id": doc_id, "sent_idx": s, "spans": [list(sp) for sp in spans_by_sent[s]]})
        if spans_by_sent:
            planted[doc_id] = {s: spans_by_sent[s] for s in sorted(spans_by_sent)}

    params = {
        "delta": delta,
        "seed": seed,
        "n_layers": n_layers,
        "n_heads": n_heads,
        "spans": {doc: {str(s): [list(sp) for sp in spans] for s, spans in by_sent.items()}
                  for doc, by_sent in planted.items()},
    }
    return corpus_records, gold_records, params


def write_synthetic_corpus(corpus_path, gold_path, params_path, **kwargs) -> None:
    corpus_records, gold_records, params = generate_synthetic_corpus(**kwargs)
    with open(corpus_path, "w", encoding="utf-8") as fh:
        for rec in corpus_records:
            fh.write(json.dumps(rec) + "\n")
    with open(gold_path, "w", encoding="utf-8") as fh:
        for rec in gold_records:
            fh.write(json.dumps(rec) + "\n")
    with open(params_path, "w", encoding="utf-8") as fh:
        json.dump(params, fh, indent=2, sort_keys=True)
        fh.write("\n")
