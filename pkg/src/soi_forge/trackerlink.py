"""Wire protocol and session management for out-of-process trackers.

Framing: a message is a 4-byte big-endian length followed by a UTF-8 JSON
header; the header's "blobs" field lists {name, dtype, shape} for each binary
blob that follows, each as a 4-byte big-endian length plus raw bytes
(row-major, little-endian for f32le). The same framing is reused for the
offline dump file format (magic "SOID").
"""

from __future__ import annotations

import io
import json
import shlex
import socket
import struct
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from soi_forge.confmap import BoxMap, GridToImage, ScoreMap
from soi_forge.core import BoundingBox

MAX_MESSAGE_BYTES = 1 << 30
DUMP_MAGIC = b"SOID"
DUMP_VERSION = 1

_DTYPES = {"u8": np.dtype(np.uint8), "f32le": np.dtype("<f4")}


class ProtocolError(Exception):
    """Malformed or unexpected traffic; the session must be closed."""


@dataclass
class Blob:
    name: str
    dtype: str  # "u8" | "f32le"
    shape: tuple[int, ...]
    data: bytes

    @classmethod
    def from_array(cls, name: str, array: np.ndarray) -> "Blob":
        if array.dtype == np.uint8:
            dtype = "u8"
        elif array.dtype in (np.float32, np.dtype("<f4")):
            dtype = "f32le"
        else:
            raise ProtocolError(f"unsupported array dtype {array.dtype}")
        arr = np.ascontiguousarray(array.astype(_DTYPES[dtype], copy=False))
        return cls(name, dtype, tuple(arr.shape), arr.tobytes())

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=_DTYPES[self.dtype]).reshape(self.shape)


@dataclass
class TrackerResponse:
    predicted: BoundingBox
    confidence: float
    score_map: ScoreMap
    box_map: BoxMap


def encode_message(header: dict, blobs: list[Blob] = ()) -> bytes:
    """Serialize a header + blobs message to the wire layout."""
    if "blobs" in header:
        raise ProtocolError("header key 'blobs' is reserved for blob metadata")
    full = dict(header)
    full["blobs"] = [{"name": b.name, "dtype": b.dtype, "shape": list(b.shape)} for b in blobs]
    for b in blobs:
        if b.dtype not in _DTYPES:
            raise ProtocolError(f"unsupported blob dtype {b.dtype!r}")
        expected = int(np.prod(b.shape, dtype=np.int64)) * _DTYPES[b.dtype].itemsize
        if expected != len(b.data):
            raise ProtocolError(
                f"blob {b.name!r}: shape {b.shape} implies {expected} bytes, got {len(b.data)}"
            )
    head = json.dumps(full, sort_keys=True).encode("utf-8")
    parts = [struct.pack(">I", len(head)), head]
    for b in blobs:
        parts.append(struct.pack(">I", len(b.data)))
        parts.append(b.data)
    return b"".join(parts)


def read_message(stream) -> tuple[dict, list[Blob]]:
    """Read one framed message from a binary stream."""
    head_len = _read_length(stream)
    head_bytes = _read_exact(stream, head_len)
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
        if dtype not in _DTYPES:
            raise ProtocolError(f"unsupported blob dtype {dtype!r}")
        shape = tuple(int(s) for s in m.get("shape", []))
        data = _read_exact(stream, _read_length(stream))
        expected = int(np.prod(shape, dtype=np.int64)) * _DTYPES[dtype].itemsize
        if expected != len(data):
            raise ProtocolError(
                f"blob {m.get('name')!r}: shape {shape} implies {expected} bytes, "
                f"got {len(data)}"
            )
        blobs.append(Blob(m.get("name", ""), dtype, shape, data))
    return header, blobs


def decode_message(payload: bytes) -> tuple[dict, list[Blob]]:
    return read_message(io.BytesIO(payload))


def _read_length(stream) -> int:
    raw = _read_exact(stream, 4)
    (length,) = struct.unpack(">I", raw)
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


# --- sessions ---------------------------------------------------------------


@dataclass
class SessionConfig:
    tracker_id: str
    endpoint: str  # "host:port" or "cmd: <command line>" for child-process stdio
    timeout_ms: int = 10000

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")


class Session:
    """One strict request/response tracker session over TCP or child stdio."""

    def __init__(self, config: SessionConfig):
        self.config = config
        self.grid: tuple[int, int] | None = None
        self._proc: subprocess.Popen | None = None
        self._sock: socket.socket | None = None
        if config.endpoint.startswith("cmd:"):
            cmd = shlex.split(config.endpoint[len("cmd:"):])
            self._proc = subprocess.Popen(
                cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
            self._reader = self._proc.stdout
            self._writer = self._proc.stdin
        else:
            host, _, port = config.endpoint.rpartition(":")
            sock = socket.create_connection(
                (host, int(port)), timeout=config.timeout_ms / 1000.0
            )
            self._sock = sock
            self._reader = sock.makefile("rb")
            self._writer = sock.makefile("wb")

    def _exchange(self, header: dict, blobs: list[Blob]) -> tuple[dict, list[Blob]]:
        self._writer.write(encode_message(header, blobs))
        self._writer.flush()
        reply, reply_blobs = read_message(self._reader)
        if reply.get("type") == "error":
            raise ProtocolError(f"tracker error: {reply.get('message')}")
        return reply, reply_blobs

    def init(self, frame: np.ndarray, box: BoundingBox) -> None:
        reply, _ = self._exchange(
            {"type": "init", "box": box.as_list()},
            [Blob.from_array("frame", np.ascontiguousarray(frame, dtype=np.uint8))],
        )
        if reply.get("type") != "ready" or "grid" not in reply:
            raise ProtocolError(f"handshake mismatch, got {reply}")
        self.grid = (int(reply["grid"][0]), int(reply["grid"][1]))

    def step(self, frame: np.ndarray) -> TrackerResponse:
        if self.grid is None:
            raise ProtocolError("session not ready: init first")
        try:
            reply, blobs = self._exchange(
                {"type": "step"},
                [Blob.from_array("frame", np.ascontiguousarray(frame, dtype=np.uint8))],
            )
        except (OSError, ProtocolError):
            self.grid = None  # mark dead
            raise
        return parse_result(reply, blobs, frame_shape=frame.shape)

    def close(self) -> None:
        if self._sock is not None:
            # makefile objects hold io-refs; the socket only really closes
            # (sending FIN) once they are closed too
            self._writer.close()
            self._reader.close()
            self._sock.close()
        if self._proc is not None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)

    def __enter__(self) -> "Session":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def parse_result(
    header: dict, blobs: list[Blob], frame_shape: tuple[int, ...] | None = None
) -> TrackerResponse:
    """Build a TrackerResponse from a result message."""
    if header.get("type") != "result":
        raise ProtocolError(f"expected result message, got {header}")
    by_name = {b.name: b for b in blobs}
    if "score_map" not in by_name or "box_map" not in by_name:
        raise ProtocolError("result message missing score_map/box_map blobs")
    scores = by_name["score_map"].to_array().astype(np.float64)
    boxes = by_name["box_map"].to_array().astype(np.float64)
    if boxes.shape != (4, *scores.shape):
        raise ProtocolError(
            f"box map shape {boxes.shape} inconsistent with score map {scores.shape}"
        )
    mapping = GridToImage()
    if frame_shape is not None:
        h, w = frame_shape[:2]
        mapping = GridToImage(scale_x=w / scores.shape[1], scale_y=h / scores.shape[0])
    score_map = ScoreMap(scores, mapping)
    x, y, bw, bh = header["box"]
    confidence = float(header.get("confidence", scores.max()))
    if not np.isfinite(confidence):
        raise ProtocolError(f"non-finite confidence {confidence}")
    return TrackerResponse(
        predicted=BoundingBox(float(x), float(y), float(bw), float(bh)),
        confidence=confidence,
        score_map=score_map,
        box_map=BoxMap(boxes),
    )


def response_message(frame_index: int, response: TrackerResponse) -> bytes:
    """Encode a TrackerResponse as a framed result message."""
    return encode_message(
        {
            "type": "result",
            "frame": frame_index,
            "box": response.predicted.as_list(),
            "confidence": response.confidence,
        },
        [
            Blob.from_array("score_map", response.score_map.values.astype(np.float32)),
            Blob.from_array("box_map", response.box_map.values.astype(np.float32)),
        ],
    )


def serve_tracker(host: str, port: int, session_factory, max_sessions: int = 1):
    """Serve an in-memory tracker (init/step interface) over the wire protocol.

    Accepts `max_sessions` sequential connections, one session each. Returns
    the bound port (useful with port=0 in tests) via the returned socket.
    """
    listener = socket.create_server((host, port))

    def run() -> None:
        try:
            for _ in range(max_sessions):
                conn, _addr = listener.accept()
                with conn:
                    _serve_connection(conn, session_factory())
        finally:
            listener.close()

    return listener, run


def _serve_connection(conn: socket.socket, tracker) -> None:
    reader = conn.makefile("rb")
    writer = conn.makefile("wb")
    frame_index = 0
    while True:
        try:
            header, blobs = read_message(reader)
        except ProtocolError:
            return
        try:
            if header.get("type") == "init":
                frame = blobs[0].to_array()
                x, y, w, h = header["box"]
                tracker.init(frame, BoundingBox(x, y, w, h))
                grid = getattr(tracker, "grid", None) or (1, 1)
                writer.write(encode_message({"type": "ready", "grid": list(grid)}))
            elif header.get("type") == "step":
                frame_index += 1
                response = tracker.step(blobs[0].to_array())
                writer.write(response_message(frame_index, response))
            elif header.get("type") == "ping":
                writer.write(encode_message({"type": "pong"}))
            else:
                writer.write(
                    encode_message(
                        {"type": "error", "message": f"unknown type {header.get('type')!r}"}
                    )
                )
        except Exception as exc:
            writer.write(encode_message({"type": "error", "message": str(exc)}))
        writer.flush()


# --- offline dump files -----------------------------------------------------


def write_dump(
    path: str | Path,
    tracker: str,
    sequence: str,
    responses: list[TrackerResponse],
    first_frame: int = 1,
) -> None:
    """Write a SOID dump: magic, version, JSON index, then per-frame records.

    Records cover frames [first_frame, first_frame + len(responses)); frame 0
    is the initialization frame and normally has no record.
    """
    grid = list(responses[0].score_map.shape) if responses else [0, 0]
    index = {
        "tracker": tracker,
        "sequence": sequence,
        "frame_count": first_frame + len(responses),
        "first_frame": first_frame,
        "grid": grid,
    }
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC)
        fh.write(struct.pack(">H", DUMP_VERSION))
        fh.write(encode_message({"type": "index", **index}))
        for offset, response in enumerate(responses):
            fh.write(response_message(first_frame + offset, response))


def read_dump(path: str | Path) -> tuple[dict, list[TrackerResponse]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DUMP_MAGIC:
            raise ProtocolError(f"bad magic {magic!r}, expected {DUMP_MAGIC!r}")
        (version,) = struct.unpack(">H", _read_exact(fh, 2))
        if version != DUMP_VERSION:
            raise ProtocolError(f"unsupported dump version {version}")
        index, _ = read_message(fh)
        if index.get("type") != "index":
            raise ProtocolError("dump index message missing")
        responses = []
        n_records = index["frame_count"] - index.get("first_frame", 1)
        for _ in range(n_records):
            header, blobs = read_message(fh)
            responses.append(parse_result(header, blobs))
        if fh.read(1):
            raise ProtocolError("trailing bytes after last record")
    return index, responses


def validate_dump(path: str | Path) -> dict:
    """Parse a dump end to end; raises ProtocolError on any defect."""
    index, responses = read_dump(path)
    grid = tuple(index["grid"])
    for i, r in enumerate(responses):
        if r.score_map.shape != grid:
            raise ProtocolError(
                f"record {i}: grid {r.score_map.shape} does not match index {grid}"
            )
    return index


def load_dump_for_mining(path: str | Path):
    """Return the per-frame (score map, box map, predicted box) list for mining.

    Index 0 (the init frame) is None; mining never consults it.
    """
    index, responses = read_dump(path)
    first = index.get("first_frame", 1)
    per_frame: list = [None] * first
    per_frame.extend((r.score_map, r.box_map, r.predicted) for r in responses)
    return index, per_frame
