"""Wire protocol framing, standard library only.

Message layout: 4-byte big-endian header length, UTF-8 JSON header, then one
4-byte big-endian length + raw payload per entry in the header's "blobs"
metadata list ({"name", "dtype", "shape"}). Supported dtypes: "u8" (1 byte)
and "f32le" (4 bytes, little endian).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

MAX_MESSAGE_BYTES = 1 << 30
ITEM_SIZES = {"u8": 1, "f32le": 4}


class ProtocolError(Exception):
    """Malformed or unexpected traffic; the session must be closed."""


@dataclass
class Blob:
    name: str
    dtype: str
    shape: tuple[int, ...]
    data: bytes

    def count(self) -> int:
        n = 1
        for s in self.shape:
            n *= s
        return n

    def floats(self) -> list[float]:
        if self.dtype != "f32le":
            raise ProtocolError(f"blob {self.name!r} is not f32le")
        return list(struct.unpack(f"<{self.count()}f", self.data))

    @classmethod
    def from_floats(cls, name: str, shape: tuple[int, ...], values) -> "Blob":
        return cls(name, "f32le", tuple(shape), struct.pack(f"<{len(values)}f", *values))


def encode_message(header: dict, blobs: list[Blob] = ()) -> bytes:
    if "blobs" in header:
        raise ProtocolError("header key 'blobs' is reserved for blob metadata")
    full = dict(header)
    full["blobs"] = [
        {"name": b.name, "dtype": b.dtype, "shape": list(b.shape)} for b in blobs
    ]
    for b in blobs:
        if b.dtype not in ITEM_SIZES:
            raise ProtocolError(f"unsupported blob dtype {b.dtype!r}")
        expected = b.count() * ITEM_SIZES[b.dtype]
        if expected != len(b.data):
            raise ProtocolError(
                f"blob {b.name!r}: shape {b.shape} implies {expected} bytes, "
                f"got {len(b.data)}"
            )
    head = json.dumps(full, sort_keys=True).encode("utf-8")
    parts = [struct.pack(">I", len(head)), head]
    for b in blobs:
        parts.append(struct.pack(">I", len(b.data)))
        parts.append(b.data)
    return b"".join(parts)


def read_message(stream) -> tuple[dict, list[Blob]]:
    head_bytes = _read_exact(stream, _read_length(stream))
    try:
        header = json.loads(head_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed JSON header: {exc}") from exc
    if not isinstance(header, dict):
        raise ProtocolError("header must be a JSON object")
    meta = header.pop("blobs", [])
    blobs = []
    for m in meta:
        dtype = m.get("dtype")
        if dtype not in ITEM_SIZES:
            raise ProtocolError(f"unsupported blob dtype {dtype!r}")
        shape = tuple(int(s) for s in m.get("shape", []))
        data = _read_exact(stream, _read_length(stream))
        blob = Blob(m.get("name", ""), dtype, shape, data)
        if blob.count() * ITEM_SIZES[dtype] != len(data):
            raise ProtocolError(
                f"blob {blob.name!r}: shape {shape} does not match payload size"
            )
        blobs.append(blob)
    return header, blobs


def _read_length(stream) -> int:
    (length,) = struct.unpack(">I", _read_exact(stream, 4))
    if length > MAX_MESSAGE_BYTES:
        raise ProtocolError(f"length {length} exceeds limit")
    return length


def _read_exact(stream, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = stream.read(remaining)
        if not chunk:
            raise ProtocolError("unexpected end of stream")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)
