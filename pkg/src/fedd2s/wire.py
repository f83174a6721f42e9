"""Length-prefixed binary transport for knowledge triplets.

Record layout, little-endian:
    u32 payload length (bytes after this field)
    u32 client id
    u16 distillation layer
    blob h1
    blob hl
    u32 label count, then that many u16 labels
Blob layout: u8 rank, rank * u32 dims, then float64 payload in C order.

The in-process protocol passes triplets by reference; this round-trip
exists so transport can be exercised byte-for-byte in tests and runs.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import IngestError


def _pack_blob(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    head = struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


class _Reader:
    def __init__(self, buf: bytes, base: int = 0):
        self.buf = buf
        self.pos = 0
        self.base = base

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise IngestError(f"triplet stream truncated at byte {self.base + self.pos}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _unpack_blob(r: _Reader) -> np.ndarray:
    (rank,) = r.unpack("<B")
    if rank > 8:
        raise IngestError(f"triplet stream: implausible blob rank {rank} at byte {r.base + r.pos - 1}")
    dims = r.unpack(f"<{rank}I") if rank else ()
    count = int(np.prod(dims)) if rank else 1
    flat = np.frombuffer(r.take(8 * count), dtype="<f8")
    return flat.reshape(dims).astype(np.float64)


def encode_triplet(client_id: int, layer: int, h1: np.ndarray, hl: np.ndarray, labels) -> bytes:
    labels = np.asarray(labels, dtype="<u2")
    body = (
        struct.pack("<IH", client_id, layer)
        + _pack_blob(h1)
        + _pack_blob(hl)
        + struct.pack("<I", len(labels))
        + labels.tobytes()
    )
    return struct.pack("<I", len(body)) + body


def encode_triplets(client_id: int, layer: int, triplets) -> bytes:
    """triplets: iterable of (h1, hl, labels)."""
    return b"".join(encode_triplet(client_id, layer, h1, hl, y) for h1, hl, y in triplets)


def decode_triplets(buf: bytes):
    """Yield (client_id, layer, h1, hl, labels) records from a byte stream."""
    pos = 0
    out = []
    while pos < len(buf):
        if pos + 4 > len(buf):
            raise IngestError(f"triplet stream truncated at byte {pos}")
        (length,) = struct.unpack("<I", buf[pos : pos + 4])
        if pos + 4 + length > len(buf):
            raise IngestError(f"triplet stream truncated at byte {pos + 4}")
        r = _Reader(buf[pos + 4 : pos + 4 + length], base=pos + 4)
        client_id, layer = r.unpack("<IH")
        h1 = _unpack_blob(r)
        hl = _unpack_blob(r)
        (count,) = r.unpack("<I")
        labels = np.frombuffer(r.take(2 * count), dtype="<u2").astype(np.int64)
        if r.pos != length:
            raise IngestError(f"triplet record at byte {pos} has {length - r.pos} trailing bytes")
        out.append((int(client_id), int(layer), h1, hl, labels))
        pos += 4 + length
    return out
