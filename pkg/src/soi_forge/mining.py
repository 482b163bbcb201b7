"""Similar-object-interference frame mining.

Three phases per sequence: per-tracker candidate extraction (via
:mod:`soi_forge.confmap`), multi-tracker voting on each frame, and a
sequence-level pass that thins temporally redundant or unusably small
selections.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from soi_forge import confmap
from soi_forge.confmap import BoxMap, ScoreMap
from soi_forge.core import BoundingBox, ImageDims, area_ratio, iou


class TrackerStatus(str, Enum):
    CORRECT = "correct"        # accurate tracking, no confusion
    COMPROMISE = "compromise"  # correct but confused
    DRIFT = "drift"            # failed and confused
    FAIL = "fail"              # failed but confident


@dataclass
class TrackerVerdict:
    status: TrackerStatus
    vote: int
    candidate_count: int
    pred_iou: float


@dataclass
class FrameVerdict:
    frame_index: int
    trackers: list[TrackerVerdict]
    soi: bool


@dataclass
class SoiFrameSet:
    """Selected SOI frame indices (strictly increasing) with their verdict snapshots."""

    frames: list[int] = field(default_factory=list)
    provenance: list[FrameVerdict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class MiningParams:
    pool_size: int = 5          # peak window k
    peak_alpha: float = 0.6     # adaptive threshold fraction
    dedup_beta: float = 0.4     # candidate IoU dedup threshold
    status_tau: float = 0.6     # decision IoU threshold
    interval: int = 30          # temporal filtering interval, frames
    scene_sigma: float = 0.5    # scene-change IoU threshold
    min_area: float = 0.001     # minimum target-to-image area ratio


def classify_status(pred_iou: float, candidate_count: int, tau: float = 0.6) -> TrackerStatus:
    """Joint classification by prediction accuracy and candidate multiplicity."""
    if candidate_count < 1:
        raise ValueError("candidate count must be >= 1 (ground truth always present)")
    accurate = pred_iou >= tau
    confused = candidate_count > 1
    if accurate and not confused:
        return TrackerStatus.CORRECT
    if accurate and confused:
        return TrackerStatus.COMPROMISE
    if confused:
        return TrackerStatus.DRIFT
    return TrackerStatus.FAIL


def status_vote(status: TrackerStatus) -> int:
    """Confused statuses vote positive; confident ones vote negative."""
    return 1 if status in (TrackerStatus.COMPROMISE, TrackerStatus.DRIFT) else 0


def decide_soi(votes: list[int]) -> bool:
    """Strict-majority rule: true iff positive votes reach floor(N/2) + 1."""
    if not votes:
        raise ValueError("empty vote list")
    return sum(votes) >= len(votes) // 2 + 1


def optimize_sequence(
    flags: list[bool],
    gts: list[BoundingBox],
    dims: ImageDims,
    interval: int = 30,
    scene_sigma: float = 0.5,
    min_area: float = 0.001,
    provenance: list[FrameVerdict] | None = None,
) -> SoiFrameSet:
    """Sequence-level selection pass.

    A flagged frame is selected when the target is large enough and either
    at least `interval` frames passed since the last *selected* frame or the
    target state changed substantially (IoU with the last selected GT below
    `scene_sigma`). Before any selection the temporal condition holds
    vacuously.
    """
    if len(flags) != len(gts):
        raise ValueError(f"flags ({len(flags)}) and gts ({len(gts)}) length mismatch")
    selected = SoiFrameSet()
    t_last: int | None = None
    for t, (flag, gt) in enumerate(zip(flags, gts)):
        if not flag:
            continue
        if area_ratio(gt, dims) < min_area:
            continue
        if t_last is not None:
            if t - t_last < interval and iou(gt, gts[t_last]) >= scene_sigma:
                continue
        selected.frames.append(t)
        if provenance is not None:
            selected.provenance.append(provenance[t])
        t_last = t
    return selected


def mine_sequence(
    tracker_inputs: list[list[tuple[ScoreMap, BoxMap, BoundingBox]]],
    gts: list[BoundingBox],
    dims: ImageDims,
    params: MiningParams = MiningParams(),
) -> tuple[SoiFrameSet, list[FrameVerdict]]:
    """Run the full mining pipeline over one sequence.

    `tracker_inputs[i][t]` is tracker i's (score map, box map, predicted box)
    for frame t. Frame 0 is the initialization frame and never votes.
    Returns the selected frame set and the complete per-frame verdict log.
    """
    if not tracker_inputs:
        raise ValueError("at least one tracker required")
    n_frames = len(gts)
    for i, per_frame in enumerate(tracker_inputs):
        if len(per_frame) != n_frames:
            raise ValueError(
                f"tracker {i} has {len(per_frame)} frames, ground truth has {n_frames}"
            )

    verdicts: list[FrameVerdict] = []
    flags: list[bool] = []
    for t in range(n_frames):
        per_tracker: list[TrackerVerdict] = []
        if t == 0:
            soi = False
        else:
            for per_frame in tracker_inputs:
                score_map, box_map, pred = per_frame[t]
                peaks = confmap.extract_peaks(score_map, params.pool_size, params.peak_alpha)
                decoded = confmap.decode_boxes(score_map, box_map, peaks)
                cand = confmap.build_candidate_set(
                    gts[t], decoded, params.dedup_beta, source_peaks=peaks
                )
                pred_iou = iou(pred, gts[t])
                status = classify_status(pred_iou, len(cand), params.status_tau)
                per_tracker.append(
                    TrackerVerdict(status, status_vote(status), len(cand), pred_iou)
                )
            soi = decide_soi([v.vote for v in per_tracker])
        verdicts.append(FrameVerdict(t, per_tracker, soi))
        flags.append(soi)

    selected = optimize_sequence(
        flags,
        gts,
        dims,
        interval=params.interval,
        scene_sigma=params.scene_sigma,
        min_area=params.min_area,
        provenance=verdicts,
    )
    return selected, verdicts


def write_soi_json(path: str | Path, sequence: str, result: SoiFrameSet,
                   verdicts: list[FrameVerdict]) -> None:
    """Per-sequence SOI output: selected frames plus the full verdict log."""
    payload = {
        "sequence": sequence,
        "frames": result.frames,
        "verdicts": [
            {
                "frame_index": v.frame_index,
                "soi": v.soi,
                "trackers": [
                    {
                        "status": tv.status.value,
                        "vote": tv.vote,
                        "candidate_count": tv.candidate_count,
                        "pred_iou": round(tv.pred_iou, 6),
                    }
                    for tv in v.trackers
                ],
            }
            for v in verdicts
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_soi_csv(path: str | Path, rows: list[tuple[str, int]], append: bool = False) -> None:
    """Flat (sequence, frame) interchange CSV."""
    mode = "a" if append else "w"
    with open(path, mode, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if not append:
            writer.writerow(["sequence", "frame"])
        writer.writerows(rows)
