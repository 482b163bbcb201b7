"""One-pass evaluation metrics, grounding metrics, guidance schedules, and the
confidence-gated grounding-correction loop.

Metric conventions follow the LaSOT toolkit lineage: overlap success over 21
thresholds with strict inequality, precision at 20 pixels, normalized
precision averaged over thresholds in [0, 0.5]. All thresholds configurable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from soi_forge.core import (
    BoundingBox,
    center_distance,
    iou,
    normalized_center_distance,
    read_groundtruth,
)

SUCCESS_THRESHOLDS = tuple(np.linspace(0.0, 1.0, 21))
NORM_PRECISION_THRESHOLDS = tuple(np.linspace(0.0, 0.5, 51))


@dataclass
class OpeResult:
    auc: float
    precision: float
    norm_precision: float
    ious: list[float]
    center_dists: list[float]
    norm_dists: list[float]

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "precision": self.precision,
            "norm_precision": self.norm_precision,
        }


@dataclass
class GroundingResult:
    sr50: float
    sr75: float
    mean_iou: float
    ious: list[float]

    def to_dict(self) -> dict:
        return {"sr50": self.sr50, "sr75": self.sr75, "mean_iou": self.mean_iou}


def success_auc(ious: list[float], thresholds=SUCCESS_THRESHOLDS) -> float:
    """Mean over thresholds of the fraction of frames with overlap > threshold."""
    if len(ious) == 0:
        raise ValueError("empty overlap list")
    arr = np.asarray(ious, dtype=np.float64)
    return float(np.mean([(arr > th).mean() for th in thresholds]))


def precision_at(dists: list[float], threshold: float = 20.0) -> float:
    """Fraction of frames whose center error is within the pixel threshold."""
    if len(dists) == 0:
        raise ValueError("empty distance list")
    arr = np.asarray(dists, dtype=np.float64)
    return float((arr <= threshold).mean())


def norm_precision(norm_dists: list[float], thresholds=NORM_PRECISION_THRESHOLDS) -> float:
    """Mean over normalized thresholds of the fraction within each threshold."""
    if len(norm_dists) == 0:
        raise ValueError("empty distance list")
    arr = np.asarray(norm_dists, dtype=np.float64)
    return float(np.mean([(arr <= th).mean() for th in thresholds]))


def ope_metrics(preds: list[BoundingBox], gts: list[BoundingBox],
                skip_first: bool = True) -> OpeResult:
    """Score per-frame predictions against ground truth.

    With skip_first, frame 0 is treated as the initialization frame and
    excluded, matching one-pass-evaluation convention.
    """
    if len(preds) != len(gts):
        raise ValueError(f"prediction/gt length mismatch: {len(preds)} vs {len(gts)}")
    start = 1 if skip_first else 0
    if len(preds) <= start:
        raise ValueError("no scorable frames")
    ious = [iou(p, g) for p, g in zip(preds[start:], gts[start:])]
    dists = [center_distance(p, g) for p, g in zip(preds[start:], gts[start:])]
    ndists = [
        normalized_center_distance(p, g) for p, g in zip(preds[start:], gts[start:])
    ]
    return OpeResult(
        auc=success_auc(ious),
        precision=precision_at(dists),
        norm_precision=norm_precision(ndists),
        ious=ious,
        center_dists=dists,
        norm_dists=ndists,
    )


def grounding_metrics(pairs: list[tuple[BoundingBox, BoundingBox]]) -> GroundingResult:
    """Success rates at IoU 0.50/0.75 plus mean IoU over (pred, gt) pairs."""
    if not pairs:
        raise ValueError("empty pair list")
    ious = [iou(p, g) for p, g in pairs]
    arr = np.asarray(ious)
    return GroundingResult(
        sr50=float((arr >= 0.50).mean()),
        sr75=float((arr >= 0.75).mean()),
        mean_iou=float(arr.mean()),
        ious=ious,
    )


# --- guidance schedules ------------------------------------------------------


@dataclass
class GuidanceSchedule:
    """Per-frame active guidance under a validity window.

    Frame t is active iff some annotated SOI frame s satisfies s <= t < s + V;
    the latest such s wins where windows overlap.
    """

    validity: int
    entries: list[tuple[int, object]] = field(default_factory=list)  # sorted by frame

    def active(self, t: int):
        best = None
        for s, annotation in self.entries:
            if s <= t < s + self.validity:
                best = annotation
            elif s > t:
                break
        return best

    def active_frames(self, n_frames: int) -> list[int]:
        return [t for t in range(n_frames) if self.active(t) is not None]


def build_schedule(
    soi_frames: list[int], annotations: dict[int, object], validity: int
) -> tuple[GuidanceSchedule, list[int]]:
    """Attach annotations to SOI frames; frames without one are skipped.

    Returns the schedule and the list of skipped frames (callers warn on them).
    """
    if validity < 1:
        raise ValueError("validity must be >= 1 frame")
    entries = []
    skipped = []
    for s in sorted(soi_frames):
        if s in annotations:
            entries.append((s, annotations[s]))
        else:
            skipped.append(s)
    return GuidanceSchedule(validity=validity, entries=entries), skipped


# --- grounding-assisted runs -------------------------------------------------


@dataclass
class CorrectionEvent:
    frame_index: int
    confidence: float
    gate: float
    applied: bool
    note: str
    box: BoundingBox | None = None


def _sane_box(box: BoundingBox | None, width: int, height: int) -> bool:
    if box is None:
        return False
    return 0 <= box.cx < width and 0 <= box.cy < height


def vlm_assisted_run(
    frames: list[np.ndarray],
    gts: list[BoundingBox],
    session,
    schedule: GuidanceSchedule | None,
    grounding_provider,
    conf_gate: float = 0.5,
    absolute_gate: float | None = None,
) -> tuple[OpeResult, list[CorrectionEvent]]:
    """Track with conditional grounding correction.

    The provider is consulted only when the frame has active guidance and the
    tracker's confidence falls below the gate (by default a fraction of the
    running maximum confidence; pass absolute_gate for a fixed threshold).
    An accepted provider box replaces both the logged prediction and the
    tracker's state for subsequent frames; provider failures fall back to the
    tracker's own prediction.
    """
    if len(frames) != len(gts):
        raise ValueError("frames and ground truths must align")
    session.init(frames[0], gts[0])
    preds: list[BoundingBox] = [gts[0]]
    log: list[CorrectionEvent] = []
    running_max = -np.inf
    height, width = frames[0].shape[:2]
    for t in range(1, len(frames)):
        response = session.step(frames[t])
        running_max = max(running_max, response.confidence)
        gate = absolute_gate if absolute_gate is not None else conf_gate * running_max
        pred = response.predicted
        guidance = schedule.active(t) if schedule is not None else None
        if guidance is not None and response.confidence < gate:
            try:
                box = grounding_provider(frames[t], guidance)
            except Exception as exc:
                log.append(CorrectionEvent(t, response.confidence, gate, False,
                                           f"provider error: {exc}"))
                box = None
            else:
                if _sane_box(box, width, height):
                    pred = box
                    _substitute_state(session, frames[t], box)
                    log.append(CorrectionEvent(t, response.confidence, gate, True,
                                               "corrected", box))
                else:
                    log.append(CorrectionEvent(t, response.confidence, gate, False,
                                               "provider box rejected", box))
        preds.append(pred)
    return ope_metrics(preds, gts), log


def _substitute_state(session, frame: np.ndarray, box: BoundingBox) -> None:
    # Re-initialize the tracker's search context on the corrected box.
    if hasattr(session, "set_template_from"):
        session.set_template_from(frame, box)
    else:
        session.init(frame, box)


# --- file-based scoring ------------------------------------------------------


def evaluate_files(pred_path: str | Path, gt_path: str | Path) -> OpeResult:
    """Score a prediction file against a ground-truth file (LaSOT line format)."""
    preds = read_groundtruth(pred_path)
    gts = read_groundtruth(gt_path)
    return ope_metrics(preds, gts)


def write_report(path: str | Path, result: OpeResult, settings: dict) -> None:
    payload = {**result.to_dict(), "settings": settings}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_per_frame_csv(path: str | Path, result: OpeResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("frame,iou,center_dist,norm_dist\n")
        for i, (o, d, n) in enumerate(
            zip(result.ious, result.center_dists, result.norm_dists), start=1
        ):
            fh.write(f"{i},{o:.6f},{d:.6f},{n:.6f}\n")
