"""Client for grounding queries against an OpenAI-compatible chat endpoint.

The endpoint and credential come from SOI_VLM_ENDPOINT / SOI_VLM_API_KEY
unless passed explicitly. Replies are free text; box extraction scans for the
first JSON object carrying a recognized box key.
"""

from __future__ import annotations

import base64
import io
import json
import logging
import os
import time
from dataclasses import dataclass

import numpy as np
import requests

from soi_forge.core import BoundingBox

log = logging.getLogger(__name__)

API_KEY_ENV = "SOI_VLM_API_KEY"
ENDPOINT_ENV = "SOI_VLM_ENDPOINT"
BOX_KEYS = ("bbox_2d", "bbox", "box")


@dataclass
class GroundingRequest:
    frame: np.ndarray  # HxWx3 uint8
    prompt: str
    model: str = "qwen2.5-vl"
    temperature: float = 0.1
    max_tokens: int = 2048


@dataclass
class GroundingReply:
    raw_text: str
    box: BoundingBox | None
    note: str = ""


def frame_data_url(frame: np.ndarray) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(frame, dtype=np.uint8)).save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def _find_json_objects(text: str):
    """Yield each balanced, parseable top-level JSON object found in the text."""
    depth = 0
    start = None
    in_string = False
    escape = False
    for i, ch in enumerate(text):
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"' and depth > 0:
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0 and start is not None:
                try:
                    yield json.loads(text[start: i + 1])
                except json.JSONDecodeError:
                    pass
                start = None


def _quad_to_box(values) -> BoundingBox | None:
    try:
        a, b, c, d = (float(v) for v in values)
    except (TypeError, ValueError):
        return None
    if not all(np.isfinite(v) for v in (a, b, c, d)):
        return None
    # Corner form when it reads as one; ambiguous quadruples default to
    # corners, which is the common grounding-model output shape.
    if c > a and d > b:
        box = (a, b, c - a, d - b)
    else:
        box = (a, b, c, d)
    if box[2] <= 0 or box[3] <= 0:
        return None
    return BoundingBox(*box)


def parse_box(text: str) -> tuple[BoundingBox | None, str]:
    """Extract the first plausible box from reply text."""
    if not isinstance(text, str) or not text:
        return None, "empty reply"
    saw_object = False
    for obj in _find_json_objects(text):
        saw_object = True
        candidates = [obj]
        # some models nest the box one level down or return a list of hits
        for value in list(obj.values()):
            if isinstance(value, dict):
                candidates.append(value)
            elif isinstance(value, list) and value and isinstance(value[0], dict):
                candidates.extend(v for v in value if isinstance(v, dict))
        for cand in candidates:
            for key in BOX_KEYS:
                if key in cand:
                    box = _quad_to_box(cand[key])
                    if box is not None:
                        return box, f"parsed from {key!r}"
    if saw_object:
        return None, "JSON object found but no box key"
    return None, "no box found"


def ground(
    request: GroundingRequest,
    endpoint: str | None = None,
    api_key: str | None = None,
    timeout: float = 60.0,
    retries: int = 2,
    trace: bool = False,
) -> GroundingReply:
    """Send one image + prompt grounding query; never raises on reply content.

    Transient HTTP failures are retried with exponential backoff; a reply
    without a parseable box comes back with box=None and a note.
    """
    endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
    if not endpoint:
        raise ValueError(f"no endpoint given and {ENDPOINT_ENV} unset")
    api_key = api_key or os.environ.get(API_KEY_ENV, "")
    url = endpoint.rstrip("/") + "/v1/chat/completions"
    payload = {
        "model": request.model,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
        "messages": [
            {
                "role": "user",
                "content": [
                    {
                        "type": "image_url",
                        "image_url": {"url": frame_data_url(request.frame)},
                    },
                    {"type": "text", "text": request.prompt},
                ],
            }
        ],
    }
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    if trace:
        log.info("grounding request to %s: %s", url,
                 json.dumps({**payload, "messages": "<image+text>"}))

    last_error = None
    for attempt in range(retries + 1):
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            last_error = f"transport error: {exc}"
        else:
            if resp.status_code in (429, 500, 502, 503, 504):
                last_error = f"transient HTTP {resp.status_code}"
            elif resp.status_code != 200:
                return GroundingReply("", None, f"HTTP {resp.status_code}: {resp.text[:200]}")
            else:
                try:
                    text = resp.json()["choices"][0]["message"]["content"]
                except (KeyError, IndexError, ValueError) as exc:
                    return GroundingReply(resp.text, None, f"malformed reply: {exc}")
                if trace:
                    log.info("grounding reply: %s", text)
                box, note = parse_box(text)
                return GroundingReply(text, box, note)
        if attempt < retries:
            time.sleep(0.5 * 2**attempt)
    return GroundingReply("", None, last_error or "request failed")
