"""Writer for the `UCAT` attention-archive byte format.

Layout: magic ``UCAT``, version u32 LE, tensor count u64 LE; index records
(key length u16, UTF-8 key ``doc_id\\x00sent_idx``, payload offset u64,
payload length u64); payload records (N u16, L u8, H u8, CRC32 u32 of the
float payload, then L*H*N*N float32 LE row-major).  Offsets are absolute.
"""

from __future__ import annotations

import os
import struct
import zlib
from typing import Iterable, List, Tuple

import numpy as np

ARCHIVE_MAGIC = b"UCAT"
ARCHIVE_VERSION = 1

_HEADER = struct.Struct("<4sIQ")
_PAYLOAD_HEAD = struct.Struct("<HBBI")


def archive_key(doc_id: str, sent_idx: int) -> bytes:
    return f"{doc_id}\x00{sent_idx}".encode("utf-8")


def write_archive(path, tensors: Iterable[Tuple[str, int, np.ndarray]]) -> int:
    """Write ``(doc_id, sent_idx, values)`` tensors; returns the count.

    ``values`` must be (L, H, N, N) float32 with rows summing to 1 (within
    1e-4).  Payloads stream through a sidecar temp file so the index, which
    precedes the payload section, can be written with final offsets.
    """
    tmp_path = str(path) + ".payload.tmp"
    entries: List[Tuple[bytes, int, int]] = []
    rel = 0
    with open(tmp_path, "wb") as tmp:
        for doc_id, sent_idx, values in tensors:
            if values.ndim != 4 or values.dtype != np.float32:
                raise ValueError(f"tensor for {doc_id!r}/{sent_idx} must be 4-d float32")
            n_layers, n_heads, n, n2 = values.shape
            if n != n2:
                raise ValueError(f"tensor for {doc_id!r}/{sent_idx} must be square in its last axes")
            row_sums = values.sum(axis=-1, dtype=np.float64)
            if not np.allclose(row_sums, 1.0, atol=1e-4):
                raise ValueError(f"tensor for {doc_id!r}/{sent_idx} has non-stochastic rows")
            payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
            head = _PAYLOAD_HEAD.pack(n, n_layers, n_heads, zlib.crc32(payload) & 0xFFFFFFFF)
            tmp.write(head)
            tmp.write(payload)
            length = len(head) + len(payload)
            entries.append((archive_key(doc_id, sent_idx), rel, length))
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
