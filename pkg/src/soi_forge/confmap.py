"""Candidate extraction from tracker confidence score maps.

A score map is a 2-D grid of responses over the tracker's search region.
Peaks are cells that are local maxima of a k-by-k window and clear an
adaptive threshold relative to the global maximum; peaks decode to boxes
through the tracker-supplied box map, and the decoded boxes are merged
with the ground truth into a deduplicated candidate set.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter

from soi_forge.core import BoundingBox, iou


class PlateauWarning(UserWarning):
    """Raised when a score map is a full plateau and every cell qualifies as a peak."""


@dataclass(frozen=True)
class GridToImage:
    """Affine mapping from grid cell (row, col) to image pixel coordinates.

    Cell (r, c) maps to the pixel position of its center:
    (offset_x + (c + 0.5) * scale_x, offset_y + (r + 0.5) * scale_y).
    """

    scale_x: float = 1.0
    scale_y: float = 1.0
    offset_x: float = 0.0
    offset_y: float = 0.0

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.offset_x + (col + 0.5) * self.scale_x,
            self.offset_y + (row + 0.5) * self.scale_y,
        )


@dataclass(frozen=True)
class ScoreMap:
    values: np.ndarray  # (Hh, Hw) float
    grid_to_image: GridToImage = GridToImage()

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValueError(f"score map must be a non-empty 2-D grid, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("score map contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class BoxMap:
    """Per-cell box parameters: 4 channels (x, y, w, h) over the score-map grid."""

    values: np.ndarray  # (4, Hh, Hw) float

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[0] != 4:
            raise ValueError(f"box map must have shape (4, Hh, Hw), got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.values.shape[1:]

    def box_at(self, row: int, col: int) -> BoundingBox:
        x, y, w, h = self.values[:, row, col]
        return BoundingBox(float(x), float(y), float(w), float(h))


@dataclass
class CandidateSet:
    """Ground-truth-first, IoU-deduplicated candidate boxes for one tracker/frame."""

    boxes: list[BoundingBox]
    source_peaks: list[tuple[int, int] | None] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.boxes)


def extract_peaks(score_map: ScoreMap, k: int = 5, alpha: float = 0.6) -> list[tuple[int, int]]:
    """Find significant peak cells of a score map.

    A cell qualifies when it equals the maximum of its centered k-by-k window
    (cells outside the grid are ignored) and its windowed maximum clears
    alpha times the global maximum. Returned in row-major order as
    (row, col) grid coordinates.
    """
    if k < 1 or k % 2 == 0:
        raise ValueError(f"window size k must be odd and >= 1, got {k}")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    h = score_map.values
    global_max = float(h.max())
    if global_max <= 0:
        raise ValueError("no positive response in score map")
    if np.all(h == h.flat[0]):
        warnings.warn(
            "score map is a full plateau; every cell qualifies as a peak",
            PlateauWarning,
            stacklevel=2,
        )
    # -inf padding == ignore outside-grid cells in the windowed max.
    pooled = maximum_filter(h, size=k, mode="constant", cval=-np.inf)
    mask = (pooled >= alpha * global_max) & (pooled == h)
    rows, cols = np.nonzero(mask)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def decode_boxes(
    score_map: ScoreMap, box_map: BoxMap, peaks: list[tuple[int, int]]
) -> list[BoundingBox]:
    """Look up the box-map entry for each peak, preserving peak order."""
    if box_map.grid_shape != score_map.shape:
        raise ValueError(
            f"box map grid {box_map.grid_shape} does not match score map {score_map.shape}"
        )
    hh, hw = score_map.shape
    out = []
    for row, col in peaks:
        if not (0 <= row < hh and 0 <= col < hw):
            raise ValueError(f"peak ({row}, {col}) outside grid {score_map.shape}")
        out.append(box_map.box_at(row, col))
    return out


def build_candidate_set(
    gt: BoundingBox,
    decoded: list[BoundingBox],
    beta: float = 0.4,
    source_peaks: list[tuple[int, int]] | None = None,
) -> CandidateSet:
    """Prepend the ground truth and greedily deduplicate by IoU.

    Scanning front to back, a box is kept only if its IoU with every
    already-kept box is <= beta. The ground truth is always kept at index 0.
    """
    kept = [gt]
    kept_peaks: list[tuple[int, int] | None] = [None]
    peaks = source_peaks if source_peaks is not None else [None] * len(decoded)
    for box, peak in zip(decoded, peaks):
        if all(iou(box, other) <= beta for other in kept):
            kept.append(box)
            kept_peaks.append(peak)
    return CandidateSet(boxes=kept, source_peaks=kept_peaks)
