"""Template tracker over raw RGB bytes, standard library only.

Scores every cell of a fixed grid by the color distance between its patch
mean and the template color captured at init. The box map is a plain tiling:
each cell decodes to the patch rectangle centered on it. Patch means sample
every few pixels to keep pure-Python cost bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass
class Frame:
    """RGB image as raw bytes, row-major, 3 bytes per pixel."""

    width: int
    height: int
    data: bytes

    def __post_init__(self) -> None:
        if len(self.data) != self.width * self.height * 3:
            raise ValueError(
                f"frame payload {len(self.data)} bytes does not match "
                f"{self.width}x{self.height}x3"
            )

    def region_mean(self, x0: int, y0: int, x1: int, y1: int,
                    step: int = 1) -> tuple[float, float, float]:
        x0 = max(0, min(self.width - 1, x0))
        y0 = max(0, min(self.height - 1, y0))
        x1 = max(x0 + 1, min(self.width, x1))
        y1 = max(y0 + 1, min(self.height, y1))
        r = g = b = n = 0
        for y in range(y0, y1, step):
            row = (y * self.width) * 3
            for x in range(x0, x1, step):
                i = row + x * 3
                r += self.data[i]
                g += self.data[i + 1]
                b += self.data[i + 2]
                n += 1
        return r / n, g / n, b / n


@dataclass(frozen=True)
class TemplateTrackerConfig:
    grid_h: int = 12
    grid_w: int = 16
    patch_radius: int = 12
    color_sigma: float = 45.0
    sample_step: int = 3  # pixel stride inside a patch when averaging


@dataclass
class StepResult:
    box: tuple[float, float, float, float]
    confidence: float
    scores: list[float]        # row-major grid_h * grid_w
    boxes: list[float]         # 4 * grid_h * grid_w, channel-major


class TemplateTracker:
    def __init__(self, config: TemplateTrackerConfig = TemplateTrackerConfig()):
        self.config = config
        self.template: tuple[float, float, float] | None = None

    @property
    def grid(self) -> tuple[int, int]:
        return (self.config.grid_h, self.config.grid_w)

    def init(self, frame: Frame, box: tuple[float, float, float, float]) -> None:
        x, y, w, h = box
        self.template = frame.region_mean(
            round(x), round(y), round(x + w), round(y + h)
        )

    def step(self, frame: Frame) -> StepResult:
        if self.template is None:
            raise RuntimeError("session not ready: init first")
        cfg = self.config
        rad = cfg.patch_radius
        tr, tg, tb = self.template
        cell_w = frame.width / cfg.grid_w
        cell_h = frame.height / cfg.grid_h

        scores: list[float] = []
        cell_boxes: list[tuple[float, float, float, float]] = []
        best = (-1.0, 0)
        for row in range(cfg.grid_h):
            cy = (row + 0.5) * cell_h
            for col in range(cfg.grid_w):
                cx = (col + 0.5) * cell_w
                r, g, b = frame.region_mean(
                    round(cx - rad), round(cy - rad),
                    round(cx + rad), round(cy + rad),
                    step=cfg.sample_step,
                )
                dist_sq = (r - tr) ** 2 + (g - tg) ** 2 + (b - tb) ** 2
                score = math.exp(-dist_sq / (2.0 * cfg.color_sigma ** 2))
                if score > best[0]:
                    best = (score, len(scores))
                scores.append(score)
                cell_boxes.append((cx - rad, cy - rad, 2 * rad, 2 * rad))

        # channel-major flattening matches the (4, grid_h, grid_w) wire shape
        boxes: list[float] = []
        for channel in range(4):
            boxes.extend(cb[channel] for cb in cell_boxes)
        return StepResult(
            box=cell_boxes[best[1]],
            confidence=best[0],
            scores=scores,
            boxes=boxes,
        )
