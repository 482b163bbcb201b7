import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from soi_forge.core import BoundingBox
from soi_forge.vlmclient import (
    GroundingRequest,
    frame_data_url,
    ground,
    parse_box,
)


class TestParseBox:
    def test_corner_quadruple(self):
        box, note = parse_box('{"bbox_2d": [10, 20, 110, 220]}')
        assert box == BoundingBox(10, 20, 100, 200)
        assert "bbox_2d" in note

    def test_xywh_quadruple(self):
        # x2 <= x1 rules out corner form, so the quadruple reads as x,y,w,h
        box, _ = parse_box('{"box": [100, 50, 30, 40]}')
        assert box == BoundingBox(100, 50, 30, 40)

    def test_box_key_priority(self):
        box, note = parse_box('{"bbox": [0, 0, 10, 10], "bbox_2d": [5, 5, 25, 25]}')
        assert box == BoundingBox(5, 5, 20, 20)
        assert "bbox_2d" in note

    def test_nested_object(self):
        box, _ = parse_box('{"result": {"bbox": [1, 2, 11, 22]}}')
        assert box == BoundingBox(1, 2, 10, 20)

    def test_list_of_hits(self):
        box, _ = parse_box('{"detections": [{"bbox": [3, 4, 13, 24]}]}')
        assert box == BoundingBox(3, 4, 10, 20)

    def test_surrounding_prose_and_markdown(self):
        text = 'Sure! Here is the target:\n```json\n{"bbox_2d": [8, 9, 18, 19]}\n```'
        box, _ = parse_box(text)
        assert box == BoundingBox(8, 9, 10, 10)

    def test_first_parseable_object_wins(self):
        text = '{"score": 0.9} and then {"bbox": [1, 1, 5, 5]}'
        box, _ = parse_box(text)
        assert box == BoundingBox(1, 1, 4, 4)

    def test_empty_reply(self):
        assert parse_box("") == (None, "empty reply")

    def test_no_json_at_all(self):
        assert parse_box("I cannot find the target.") == (None, "no box found")

    def test_object_without_box_key(self):
        box, note = parse_box('{"answer": "top left"}')
        assert box is None
        assert note == "JSON object found but no box key"

    def test_degenerate_box_rejected(self):
        box, note = parse_box('{"bbox": [10, 10, 0, -3]}')
        assert box is None

    def test_non_numeric_values_rejected(self):
        box, _ = parse_box('{"bbox": ["a", "b", "c", "d"]}')
        assert box is None

    def test_wrong_arity_rejected(self):
        box, _ = parse_box('{"bbox": [1, 2, 3]}')
        assert box is None

    @given(st.text(max_size=300))
    def test_never_raises_on_arbitrary_text(self, text):
        box, note = parse_box(text)
        assert box is None or isinstance(box, BoundingBox)
        assert isinstance(note, str)

    @given(st.lists(st.floats(allow_nan=True, allow_infinity=True), max_size=6))
    def test_never_raises_on_arbitrary_quadruples(self, values):
        payload = json.dumps({"bbox": [v if v == v and abs(v) != float("inf") else str(v)
                                       for v in values]})
        box, _ = parse_box(payload)
        assert box is None or box.w > 0


class TestFrameDataUrl:
    def test_png_payload(self):
        frame = np.zeros((4, 6, 3), dtype=np.uint8)
        url = frame_data_url(frame)
        prefix = "data:image/png;base64,"
        assert url.startswith(prefix)
        raw = base64.b64decode(url[len(prefix):])
        assert raw[:8] == b"\x89PNG\r\n\x1a\n"


class _Script:
    """Mutable per-test behavior for the stub chat-completions server."""

    responses: list = []
    requests: list = []


class StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        _Script.requests.append(
            {"path": self.path, "auth": self.headers.get("Authorization"), "body": body}
        )
        status, payload = _Script.responses.pop(0)
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _Script.responses = []
    _Script.requests = []
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def chat_reply(text):
    return {"choices": [{"message": {"content": text}}]}


def request():
    return GroundingRequest(frame=np.zeros((4, 4, 3), dtype=np.uint8),
                            prompt="locate the red car")


class TestGround:
    def test_successful_roundtrip(self, stub_server, monkeypatch):
        monkeypatch.setenv("SOI_VLM_API_KEY", "sk-test")
        _Script.responses = [(200, chat_reply('{"bbox_2d": [1, 2, 11, 22]}'))]
        reply = ground(request(), endpoint=stub_server)
        assert reply.box == BoundingBox(1, 2, 10, 20)
        sent = _Script.requests[0]
        assert sent["path"] == "/v1/chat/completions"
        assert sent["auth"] == "Bearer sk-test"
        assert sent["body"]["temperature"] == 0.1
        assert sent["body"]["max_tokens"] == 2048
        content = sent["body"]["messages"][0]["content"]
        assert content[0]["image_url"]["url"].startswith("data:image/png;base64,")
        assert content[1]["text"] == "locate the red car"

    def test_endpoint_from_environment(self, stub_server, monkeypatch):
        monkeypatch.setenv("SOI_VLM_ENDPOINT", stub_server)
        _Script.responses = [(200, chat_reply('{"bbox": [0, 0, 4, 4]}'))]
        reply = ground(request())
        assert reply.box == BoundingBox(0, 0, 4, 4)

    def test_missing_endpoint_rejected(self, monkeypatch):
        monkeypatch.delenv("SOI_VLM_ENDPOINT", raising=False)
        with pytest.raises(ValueError, match="SOI_VLM_ENDPOINT"):
            ground(request())

    def test_retries_transient_then_succeeds(self, stub_server, monkeypatch):
        monkeypatch.setattr("soi_forge.vlmclient.time.sleep", lambda s: None)
        _Script.responses = [
            (503, {"error": "busy"}),
            (429, {"error": "rate"}),
            (200, chat_reply('{"bbox": [5, 5, 15, 15]}')),
        ]
        reply = ground(request(), endpoint=stub_server, retries=2)
        assert reply.box == BoundingBox(5, 5, 10, 10)
        assert len(_Script.requests) == 3

    def test_retries_exhausted(self, stub_server, monkeypatch):
        monkeypatch.setattr("soi_forge.vlmclient.time.sleep", lambda s: None)
        _Script.responses = [(503, {})] * 3
        reply = ground(request(), endpoint=stub_server, retries=2)
        assert reply.box is None
        assert "503" in reply.note

    def test_hard_http_error_not_retried(self, stub_server):
        _Script.responses = [(401, {"error": "bad key"})]
        reply = ground(request(), endpoint=stub_server)
        assert reply.box is None
        assert reply.note.startswith("HTTP 401")
        assert len(_Script.requests) == 1

    def test_unparseable_reply_body(self, stub_server):
        _Script.responses = [(200, {"unexpected": True})]
        reply = ground(request(), endpoint=stub_server)
        assert reply.box is None
        assert "malformed reply" in reply.note

    def test_reply_without_box_keeps_raw_text(self, stub_server):
        _Script.responses = [(200, chat_reply("the target is not visible"))]
        reply = ground(request(), endpoint=stub_server)
        assert reply.box is None
        assert reply.raw_text == "the target is not visible"
        assert reply.note == "no box found"
