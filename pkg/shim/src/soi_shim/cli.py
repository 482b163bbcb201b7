"""soi-shim: serve a standard-library tracker over the wire protocol.

Usage: soi-shim --listen HOST:PORT [--tracker template] [--max-sessions N]

Each connection is one session. The server answers init with a ready message
carrying the grid shape, step with a result message (predicted box,
confidence, score map, box map), ping with pong, and anything else with an
error message.
"""

from __future__ import annotations

import argparse
import socket
import sys

from soi_shim.protocol import Blob, ProtocolError, encode_message, read_message
from soi_shim.tracker import Frame, TemplateTracker

TRACKERS = {"template": TemplateTracker}


def _frame_from_blob(blob) -> Frame:
    if blob.dtype != "u8" or len(blob.shape) != 3 or blob.shape[2] != 3:
        raise ProtocolError(f"expected HxWx3 u8 frame blob, got {blob.dtype} {blob.shape}")
    height, width, _ = blob.shape
    return Frame(width=width, height=height, data=blob.data)


def serve_connection(conn: socket.socket, tracker) -> None:
    reader = conn.makefile("rb")
    writer = conn.makefile("wb")
    ready = False
    frame_index = 0
    while True:
        try:
            header, blobs = read_message(reader)
        except ProtocolError:
            return
        try:
            kind = header.get("type")
            if kind == "init":
                frame = _frame_from_blob(blobs[0])
                x, y, w, h = (float(v) for v in header["box"])
                tracker.init(frame, (x, y, w, h))
                ready = True
                frame_index = 0
                writer.write(encode_message({"type": "ready",
                                             "grid": list(tracker.grid)}))
            elif kind == "step":
                if not ready:
                    raise RuntimeError("session not ready: init first")
                frame_index += 1
                result = tracker.step(_frame_from_blob(blobs[0]))
                gh, gw = tracker.grid
                writer.write(encode_message(
                    {
                        "type": "result",
                        "frame": frame_index,
                        "box": list(result.box),
                        "confidence": result.confidence,
                    },
                    [
                        Blob.from_floats("score_map", (gh, gw), result.scores),
                        Blob.from_floats("box_map", (4, gh, gw), result.boxes),
                    ],
                ))
            elif kind == "ping":
                writer.write(encode_message({"type": "pong"}))
            else:
                writer.write(encode_message(
                    {"type": "error", "message": f"unknown type {kind!r}"}
                ))
        except Exception as exc:
            writer.write(encode_message({"type": "error", "message": str(exc)}))
        writer.flush()


def serve(host: str, port: int, tracker_factory, max_sessions: int | None = None):
    """Bind and return (listener, run). run() accepts sessions sequentially."""
    listener = socket.create_server((host, port))

    def run() -> None:
        served = 0
        try:
            while max_sessions is None or served < max_sessions:
                conn, _addr = listener.accept()
                with conn:
                    serve_connection(conn, tracker_factory())
                served += 1
        finally:
            listener.close()

    return listener, run


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="soi-shim", description="serve a template tracker over the wire protocol"
    )
    parser.add_argument("--listen", required=True, metavar="HOST:PORT")
    parser.add_argument("--tracker", choices=sorted(TRACKERS), default="template")
    parser.add_argument("--max-sessions", type=int, default=None,
                        help="exit after N sessions (default: serve forever)")
    args = parser.parse_args(argv)

    host, _, port = args.listen.rpartition(":")
    if not port.isdigit():
        parser.error(f"bad --listen value {args.listen!r}, expected HOST:PORT")
    listener, run = serve(host or "127.0.0.1", int(port), TRACKERS[args.tracker],
                          args.max_sessions)
    print(f"listening on {listener.getsockname()[0]}:{listener.getsockname()[1]}",
          flush=True)
    try:
        run()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
