"""Online interference masking harness.

Diagnostic loop: when the tracker's prediction drifts from the ground truth,
the candidate regions it responded to are gray-masked in the next frame while
the ground-truth region is restored. This requires ground truth at runtime and
is an upper-bound experiment, not a deployable tracker improvement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from soi_forge import confmap
from soi_forge.core import BoundingBox, iou

MASK_GRAY = (125, 125, 125)


@dataclass
class OimFrameRecord:
    frame_index: int
    predicted: BoundingBox
    drift: bool
    masked_candidates: list[BoundingBox]
    input_was_masked: bool
    confidence: float


@dataclass
class OimTrace:
    records: list[OimFrameRecord] = field(default_factory=list)
    error: str | None = None

    @property
    def predictions(self) -> list[BoundingBox]:
        return [r.predicted for r in self.records]


def detect_drift(pred: BoundingBox, gt: BoundingBox, tau: float = 0.6) -> bool:
    """Drift means the prediction's IoU with ground truth fell strictly below tau."""
    return iou(pred, gt) < tau


def _rasterize(box: BoundingBox, height: int, width: int) -> tuple[int, int, int, int]:
    # Half-open integer rectangle [round(x), round(x+w)) x [round(y), round(y+h)),
    # clamped to the image.
    x0 = max(0, min(width, round(box.x)))
    x1 = max(0, min(width, round(box.x + box.w)))
    y0 = max(0, min(height, round(box.y)))
    y1 = max(0, min(height, round(box.y + box.h)))
    return y0, y1, x0, x1


def apply_mask(
    frame: np.ndarray, candidates: list[BoundingBox], gt: BoundingBox
) -> np.ndarray:
    """Gray-mask every candidate region, then restore the ground-truth region.

    Pixels outside all boxes are untouched; the restore step wins wherever a
    candidate overlaps the ground truth.
    """
    if frame.ndim != 3 or frame.shape[2] != 3 or frame.dtype != np.uint8:
        raise ValueError(f"expected HxWx3 uint8 frame, got {frame.shape} {frame.dtype}")
    height, width = frame.shape[:2]
    out = frame.copy()
    for box in candidates:
        y0, y1, x0, x1 = _rasterize(box, height, width)
        out[y0:y1, x0:x1] = MASK_GRAY
    y0, y1, x0, x1 = _rasterize(gt, height, width)
    out[y0:y1, x0:x1] = frame[y0:y1, x0:x1]
    return out


def run_oim(
    frames: list[np.ndarray],
    gts: list[BoundingBox],
    session,
    tau: float = 0.6,
    pool_size: int = 5,
    peak_alpha: float = 0.6,
    dump_dir: str | Path | None = None,
) -> OimTrace:
    """Frame-by-frame masking loop against a live tracker session.

    The session is initialized on frame 0 with its ground truth. From frame 1
    on, the tracker receives the prepared masked frame when drift was detected
    on the previous frame, otherwise the raw frame. Candidates come from the
    current response's peaks only (the ground truth is restored separately,
    never masked). A session failure aborts with a partial trace.
    """
    if len(frames) != len(gts):
        raise ValueError("frames and ground truths must align")
    if len(frames) < 2:
        raise ValueError("need at least an init frame and one tracked frame")

    trace = OimTrace()
    session.init(frames[0], gts[0])
    next_input: np.ndarray | None = None
    for t in range(1, len(frames)):
        input_frame = next_input if next_input is not None else frames[t]
        input_was_masked = next_input is not None
        next_input = None
        try:
            response = session.step(input_frame)
        except Exception as exc:  # session failure: return what we have
            trace.error = f"session failed at frame {t}: {exc}"
            return trace

        drift = detect_drift(response.predicted, gts[t], tau)
        masked: list[BoundingBox] = []
        if drift and t + 1 < len(frames):
            peaks = confmap.extract_peaks(response.score_map, pool_size, peak_alpha)
            masked = confmap.decode_boxes(response.score_map, response.box_map, peaks)
            next_input = apply_mask(frames[t + 1], masked, gts[t + 1])
            if dump_dir is not None:
                _dump_frame(next_input, Path(dump_dir), t + 1)
        trace.records.append(
            OimFrameRecord(
                frame_index=t,
                predicted=response.predicted,
                drift=drift,
                masked_candidates=masked,
                input_was_masked=input_was_masked,
                confidence=response.confidence,
            )
        )
    return trace


def _dump_frame(frame: np.ndarray, dump_dir: Path, index: int) -> None:
    from PIL import Image

    dump_dir.mkdir(parents=True, exist_ok=True)
    Image.fromarray(frame).save(dump_dir / f"masked_{index:08d}.png")


def write_trace_jsonl(path: str | Path, trace: OimTrace) -> None:
    """One JSON object per frame record."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in trace.records:
            fh.write(
                json.dumps(
                    {
                        "frame_index": r.frame_index,
                        "predicted": r.predicted.as_list(),
                        "drift": r.drift,
                        "masked_candidates": [b.as_list() for b in r.masked_candidates],
                        "input_was_masked": r.input_was_masked,
                        "confidence": r.confidence,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
        if trace.error:
            fh.write(json.dumps({"error": trace.error}) + "\n")
