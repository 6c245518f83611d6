"""Span classifier: a small two-layer CNN over attention crops.

The network sees only the multi-channel attention crop of a span, never the
token strings.  Crops are zero-padded to k_max x k_max with a validity mask;
both conv layers (3x3, 32 filters, zero padding 1, ReLU) are masked so padded
cells contribute nothing, then masked global average pooling feeds a logistic
output.  Gradients are exact backpropagation; optimization is Adam; training
stops the first time validation F1 drops and the best-F1 checkpoint wins.

Parameters live as float32 arrays (the checkpoint format is float32), all
arithmetic is done in float64.
"""

from __future__ import annotations

import json
import random
import struct
import zlib
from dataclasses import dataclass, field, asdict, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .labelgen import SpanLabel, POSITIVE

N_FILTERS = 32
KERNEL = 3

CHECKPOINT_MAGIC = b"UCPM"
CHECKPOINT_VERSION = 1

PROB_CLAMP = 1e-7


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointChecksumError(CheckpointError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 128
    max_epochs: int = 50
    validation_fraction: float = 0.10
    seed: int = 0
    k_max: int = 6
    decision_threshold: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.validation_fraction < 1.0):
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class ModelParams:
    conv1_w: np.ndarray  # (32, C, 3, 3)
    conv1_b: np.ndarray  # (32,)
    conv2_w: np.ndarray  # (32, 32, 3, 3)
    conv2_b: np.ndarray  # (32,)
    out_w: np.ndarray  # (32,)
    out_b: np.ndarray  # ()

    BLOCKS = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "out_w", "out_b")

    @property
    def n_channels(self) -> int:
        return self.conv1_w.shape[1]

    def blocks(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.BLOCKS}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.blocks().items()})

    def n_parameters(self) -> int:
        return sum(v.size for v in self.blocks().values())

    def check_finite(self) -> None:
        for name, v in self.blocks().items():
            if not np.all(np.isfinite(v)):
                raise TrainingError(f"non-finite values in parameter block {name}")


def init_params(n_channels: int, seed: int = 0) -> ModelParams:
    """Seeded uniform(+-sqrt(6/fan_in)) initialization, zero biases."""
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        lim = np.sqrt(6.0 / fan_in)
        return rng.uniform(-lim, lim, size=shape).astype(np.float32)

    return ModelParams(
        conv1_w=uniform((N_FILTERS, n_channels, KERNEL, KERNEL), n_channels * KERNEL * KERNEL),
        conv1_b=np.zeros(N_FILTERS, dtype=np.float32),
        conv2_w=uniform((N_FILTERS, N_FILTERS, KERNEL, KERNEL), N_FILTERS * KERNEL * KERNEL),
        conv2_b=np.zeros(N_FILTERS, dtype=np.float32),
        out_w=uniform((N_FILTERS,), N_FILTERS),
        out_b=np.zeros((), dtype=np.float32),
    )


def pad_feature(values: np.ndarray, k_max: int) -> Tuple[np.ndarray, np.ndarray]:
    """Zero-pad a (C, k, k) crop to (C, k_max, k_max) plus a validity mask."""
    c, k, k2 = values.shape
    if k != k2:
        raise ValueError("span feature crop must be square")
    if k > k_max:
        raise ValueError(f"span length {k} exceeds k_max {k_max}")
    x = np.zeros((c, k_max, k_max), dtype=np.float64)
    x[:, :k, :k] = values
    mask = np.zeros((k_max, k_max), dtype=np.float64)
    mask[:k, :k] = 1.0
    return x, mask


def _sigmoid(logits: np.ndarray) -> np.ndarray:
    out = np.empty_like(logits, dtype=np.float64)
    pos = logits >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    e = np.exp(logits[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3x3 convolution, stride 1, zero padding 1.  x: (B,C,H,W), w: (O,C,3,3)."""
    bsz, _, h, width = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((bsz, w.shape[0], h, width), dtype=np.float64)
    for dy in range(KERNEL):
        for dx in range(KERNEL):
            xs = xp[:, :, dy : dy + h, dx : dx + width]
            out += np.einsum("oc,bchw->bohw", w[:, :, dy, dx], xs, optimize=True)
    return out + b[None, :, None, None]


def _conv2d_backward(x, w, dout):
    bsz, _, h, width = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w, dtype=np.float64)
    for dy in range(KERNEL):
        for dx in range(KERNEL):
            xs = xp[:, :, dy : dy + h, dx : dx + width]
            dw[:, :, dy, dx] = np.einsum("bohw,bchw->oc", dout, xs, optimize=True)
            dxp[:, :, dy : dy + h, dx : dx + width] += np.einsum(
                "oc,bohw->bchw", w[:, :, dy, dx], dout, optimize=True
            )
    db = dout.sum(axis=(0, 2, 3))
    return dxp[:, :, 1:-1, 1:-1], dw, db


def forward_batch(params: ModelParams, x: np.ndarray, mask: np.ndarray, want_cache: bool = False):
    """Batched forward pass.  x: (B,C,k,k) float64, mask: (B,k,k) in {0,1}.

    Returns (probs, logits) and optionally the cache for backprop.
    """
    if x.shape[1] != params.n_channels:
        raise ValueError(
            f"feature has {x.shape[1]} channels but model expects {params.n_channels}"
        )
    m = mask[:, None, :, :]
    w1 = params.conv1_w.astype(np.float64)
    w2 = params.conv2_w.astype(np.float64)
    z1 = _conv2d(x, w1, params.conv1_b.astype(np.float64))
    a1 = np.maximum(z1, 0.0) * m
    z2 = _conv2d(a1, w2, params.conv2_b.astype(np.float64))
    a2 = np.maximum(z2, 0.0) * m
    n_valid = mask.sum(axis=(1, 2))
    pooled = a2.sum(axis=(2, 3)) / n_valid[:, None]
    logits = pooled @ params.out_w.astype(np.float64) + float(params.out_b)
    probs = _sigmoid(logits)
    if not want_cache:
        return probs, logits
    cache = (x, mask, w1, w2, z1, a1, z2, a2, n_valid, pooled, probs)
    return probs, logits, cache


def forward(params: ModelParams, feature_values: np.ndarray, k_max: Optional[int] = None):
    """Single-span forward pass; returns (probability, logit)."""
    k = feature_values.shape[1]
    x, mask = pad_feature(np.asarray(feature_values, dtype=np.float64), k_max or k)
    probs, logits = forward_batch(params, x[None], mask[None])
    return float(probs[0]), float(logits[0])


def bce_loss(probs: np.ndarray, targets: np.ndarray) -> float:
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p)))


def _loss_and_grads(params: ModelParams, x, mask, targets):
    probs, logits, cache = forward_batch(params, x, mask, want_cache=True)
    (x, mask, w1, w2, z1, a1, z2, a2, n_valid, pooled, probs) = cache
    bsz = x.shape[0]
    loss = bce_loss(probs, targets)
    # gradient of the clamped BCE: zero where the clamp is active
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    dp = (p - targets) / (p * (1.0 - p)) / bsz
    dp = np.where((probs > PROB_CLAMP) & (probs < 1.0 - PROB_CLAMP), dp, 0.0)
    dlogits = dp * probs * (1.0 - probs)
    d_out_w = pooled.T @ dlogits
    d_out_b = dlogits.sum()
    dpooled = dlogits[:, None] * params.out_w.astype(np.float64)[None, :]
    m = mask[:, None, :, :]
    da2 = (dpooled / n_valid[:, None])[:, :, None, None] * np.ones_like(a2)
    dz2 = da2 * (z2 > 0.0) * m
    da1, dw2, db2 = _conv2d_backward(a1, w2, dz2)
    dz1 = da1 * (z1 > 0.0) * m
    _, dw1, db1 = _conv2d_backward(x, w1, dz1)
    grads = {
        "conv1_w": dw1,
        "conv1_b": db1,
        "conv2_w": dw2,
        "conv2_b": db2,
        "out_w": d_out_w,
        "out_b": np.asarray(d_out_b),
    }
    return loss, grads, probs


@dataclass
class AdamState:
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(
            t=0,
            m={k: np.zeros(v.shape, dtype=np.float64) for k, v in params.blocks().items()},
            v={k: np.zeros(v.shape, dtype=np.float64) for k, v in params.blocks().items()},
        )


def train_step(
    params: ModelParams,
    adam: AdamState,
    x: np.ndarray,
    targets: np.ndarray,
    mask: np.ndarray,
    config: TrainConfig,
) -> Tuple[ModelParams, AdamState, float]:
    """One Adam update on a batch; returns (new params, new state, batch loss)."""
    if x.shape[0] == 0:
        raise TrainingError("empty batch")
    loss, grads, _ = _loss_and_grads(params, x, mask, targets)
    if not np.isfinite(loss):
        raise TrainingError("non-finite loss")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter block {name}")
    t = adam.t + 1
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
    new_blocks = {}
    new_m, new_v = {}, {}
    for name, value in params.blocks().items():
        g = grads[name]
        m = b1 * adam.m[name] + (1 - b1) * g
        v = b2 * adam.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        updated = value.astype(np.float64) - config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        new_blocks[name] = updated.astype(np.float32)
        new_m[name], new_v[name] = m, v
    return ModelParams(**new_blocks), AdamState(t=t, m=new_m, v=new_v), loss


# ---------------------------------------------------------------------------
# training driver


@dataclass
class ModelCheckpoint:
    params: ModelParams
    config: TrainConfig
    best_epoch: int
    val_f1: float
    n_channels: int


def _prf(tp: int, fp: int, fn: int) -> Tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def split_documents(doc_ids: Sequence[str], fraction: float, seed: int) -> Tuple[set, set]:
    """Document-wise train/validation split; every doc lands on one side."""
    ids = sorted(set(doc_ids))
    if len(ids) < 2:
        raise TrainingError("need labels from at least two documents for a doc-wise split")
    rng = random.Random(seed)
    rng.shuffle(ids)
    n_val = min(max(1, round(fraction * len(ids))), len(ids) - 1)
    return set(ids[n_val:]), set(ids[:n_val])


def stop_index(f1_history: Sequence[float]) -> Optional[int]:
    """Index of the epoch after which training halts (first strict drop)."""
    for i in range(1, len(f1_history)):
        if f1_history[i] < f1_history[i - 1]:
            return i
    return None


def best_index(f1_history: Sequence[float]) -> int:
    best = 0
    for i, f1 in enumerate(f1_history):
        if f1 > f1_history[best]:
            best = i
    return best


def build_dataset(labels, docs_by_id, provider, k_max: int):
    """Resolve every label to a padded feature; returns (x, y, mask, skipped).

    Spans beyond the 64-word attention truncation are skipped and counted.
    """
    from .attnfeat import extract_span_feature

    tensors = {}
    xs, ys, masks = [], [], []
    skipped = 0
    missing = []
    for lab in labels:
        doc = docs_by_id.get(lab.doc_id)
        if doc is None:
            missing.append(lab.doc_id)
            continue
        key = (lab.doc_id, lab.span.sent_idx)
        if key not in tensors:
            tensors[key] = provider.get(lab.doc_id, lab.span.sent_idx, doc.sentences[lab.span.sent_idx])
        tensor = tensors[key]
        if lab.span.end > tensor.n_words:
            skipped += 1
            continue
        feat = extract_span_feature(tensor, lab.span)
        x, mask = pad_feature(feat.values.astype(np.float64), k_max)
        xs.append(x)
        ys.append(1.0 if lab.polarity == POSITIVE else 0.0)
        masks.append(mask)
    if missing:
        raise TrainingError(f"labels reference unknown documents: {sorted(set(missing))[:10]}")
    if not xs:
        raise TrainingError("no usable labeled spans")
    return np.stack(xs), np.array(ys), np.stack(masks), skipped


def evaluate_split(params: ModelParams, x, y, mask, threshold: float) -> Tuple[float, float, float]:
    probs, _ = forward_batch(params, x, mask)
    pred = probs >= threshold
    tp = int(np.sum(pred & (y == 1.0)))
    fp = int(np.sum(pred & (y == 0.0)))
    fn = int(np.sum(~pred & (y == 1.0)))
    return _prf(tp, fp, fn)


def train(
    labels: Sequence[SpanLabel],
    docs_by_id: Dict[str, object],
    provider,
    config: TrainConfig,
    report_path=None,
    val_scorer: Optional[Callable[[int, ModelParams], float]] = None,
) -> ModelCheckpoint:
    """Train the span classifier on silver labels.

    ``val_scorer`` overrides the validation F1 computation (used by tests to
    script a trajectory); precision/recall are reported as 0 in that case.
    """
    n_pos = sum(1 for l in labels if l.polarity == POSITIVE)
    n_neg = len(labels) - n_pos
    if n_pos < 10 or n_neg < 10:
        raise TrainingError(
            f"need at least 10 positive and 10 negative labels, got {n_pos} pos / {n_neg} neg"
        )
    train_docs, val_docs = split_documents([l.doc_id for l in labels], config.validation_fraction, config.seed)
    train_labels = [l for l in labels if l.doc_id in train_docs]
    val_labels = [l for l in labels if l.doc_id in val_docs]
    if not train_labels or not val_labels:
        raise TrainingError("document split left one side empty")
    x_tr, y_tr, m_tr, _ = build_dataset(train_labels, docs_by_id, provider, config.k_max)
    x_va, y_va, m_va, _ = build_dataset(val_labels, docs_by_id, provider, config.k_max)

    n_channels = x_tr.shape[1]
    params = init_params(n_channels, seed=config.seed)
    adam = AdamState.for_params(params)
    rng = np.random.default_rng(config.seed + 1)

    history: List[float] = []
    report: List[dict] = []
    best_params = params.copy()
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(y_tr))
        losses = []
        for i in range(0, len(order), config.batch_size):
            idx = order[i : i + config.batch_size]
            params, adam, loss = train_step(params, adam, x_tr[idx], y_tr[idx], m_tr[idx], config)
            losses.append(loss)
        if val_scorer is not None:
            val_p = val_r = 0.0
            val_f1 = float(val_scorer(epoch, params))
        else:
            val_p, val_r, val_f1 = evaluate_split(params, x_va, y_va, m_va, config.decision_threshold)
        history.append(val_f1)
        report.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "val_p": val_p,
                "val_r": val_r,
                "val_f1": val_f1,
            }
        )
        if best_index(history) == len(history) - 1:
            best_params = params.copy()
        if stop_index(history) is not None:
            break
    best = best_index(history)
    if report_path is not None:
        with open(report_path, "w", encoding="utf-8") as fh:
            for rec in report:
                fh.write(json.dumps(rec) + "\n")
    return ModelCheckpoint(
        params=best_params,
        config=config,
        best_epoch=best + 1,
        val_f1=history[best],
        n_channels=n_channels,
    )


# ---------------------------------------------------------------------------
# checkpoint codec
#
# Layout: magic "UCPM", version u32 LE, metadata length u32 LE, UTF-8 JSON
# metadata (architecture dims, training config, best epoch, validation F1,
# tensor shapes in order), then each tensor as float32 LE bytes followed by a
# CRC32 u32 of those bytes.


def save_checkpoint(path, ckpt: ModelCheckpoint) -> None:
    blocks = ckpt.params.blocks()
    meta = {
        "n_channels": ckpt.n_channels,
        "n_filters": N_FILTERS,
        "kernel": KERNEL,
        "best_epoch": ckpt.best_epoch,
        "val_f1": ckpt.val_f1,
        "config": asdict(ckpt.config),
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in blocks.items()],
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        for name, value in blocks.items():
            payload = np.ascontiguousarray(value, dtype="<f4").tobytes()
            fh.write(payload)
            fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def load_checkpoint(path) -> ModelCheckpoint:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointVersionError(f"not a checkpoint file (magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise CheckpointVersionError(f"unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        blocks = {}
        for spec in meta["tensors"]:
            shape = tuple(spec["shape"])
            n_bytes = int(np.prod(shape, dtype=np.int64)) * 4 if shape else 4
            payload = fh.read(n_bytes)
            if len(payload) != n_bytes:
                raise CheckpointError(f"checkpoint truncated in tensor {spec['name']}")
            crc_bytes = fh.read(4)
            if len(crc_bytes) != 4:
                raise CheckpointError(f"checkpoint truncated after tensor {spec['name']}")
            (crc,) = struct.unpack("<I", crc_bytes)
            if zlib.crc32(payload) & 0xFFFFFFFF != crc:
                raise CheckpointChecksumError(f"checksum mismatch in tensor {spec['name']}")
            blocks[spec["name"]] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    try:
        params = ModelParams(**blocks)
    except TypeError as exc:
        raise CheckpointError(f"unexpected tensor set in checkpoint: {sorted(blocks)}") from exc
    expected = {
        "conv1_w": (N_FILTERS, meta["n_channels"], KERNEL, KERNEL),
        "conv2_w": (N_FILTERS, N_FILTERS, KERNEL, KERNEL),
    }
    for name, shape in expected.items():
        if blocks[name].shape != shape:
            raise CheckpointError(f"tensor {name} has shape {blocks[name].shape}, expected {shape}")
    config = TrainConfig(**meta["config"])
    return ModelCheckpoint(
        params=params,
        config=config,
        best_epoch=meta["best_epoch"],
        val_f1=meta["val_f1"],
        n_channels=meta["n_channels"],
    )
