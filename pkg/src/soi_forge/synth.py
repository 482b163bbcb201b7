"""Deterministic synthetic scenarios and a pixel-correlation reference tracker.

Scenes are colored rectangles on a flat background, so per-pixel oracles stay
trivial. The reference tracker scores each grid cell by mean-color similarity
to the template captured at init, which makes gray masking measurably suppress
masked regions; that is exactly the property the masking harness needs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from soi_forge.confmap import BoxMap, GridToImage, ScoreMap
from soi_forge.core import BoundingBox, ImageDims, write_groundtruth
from soi_forge.trackerlink import TrackerResponse


@dataclass
class SceneObject:
    color: tuple[int, int, int]
    trajectory: list[BoundingBox]  # one box per frame
    visible: list[bool]            # one flag per frame


@dataclass
class Scenario:
    dims: ImageDims
    n_frames: int
    background: tuple[int, int, int]
    objects: list[SceneObject]
    target_index: int
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.target_index < len(self.objects):
            raise ValueError("target index out of range")
        for obj in self.objects:
            if len(obj.trajectory) != self.n_frames or len(obj.visible) != self.n_frames:
                raise ValueError("object trajectory/visibility must cover all frames")

    @property
    def target(self) -> SceneObject:
        return self.objects[self.target_index]

    def gt_boxes(self) -> list[BoundingBox]:
        return list(self.target.trajectory)


def _expand_trajectory(spec, n_frames: int) -> list[BoundingBox]:
    if isinstance(spec, dict):  # linear-motion shorthand
        x0, y0, w0, h0 = spec["from"]
        x1, y1, w1, h1 = spec["to"]
        out = []
        for t in range(n_frames):
            a = t / (n_frames - 1) if n_frames > 1 else 0.0
            out.append(
                BoundingBox(
                    x0 + a * (x1 - x0),
                    y0 + a * (y1 - y0),
                    w0 + a * (w1 - w0),
                    h0 + a * (h1 - h0),
                )
            )
        return out
    boxes = [BoundingBox(*b) for b in spec]
    if len(boxes) != n_frames:
        raise ValueError(f"explicit trajectory has {len(boxes)} boxes for {n_frames} frames")
    return boxes


def _expand_visible(spec, n_frames: int) -> list[bool]:
    if spec is True or spec is None:
        return [True] * n_frames
    flags = [False] * n_frames
    for start, end in spec:  # inclusive frame ranges
        for t in range(max(0, start), min(n_frames - 1, end) + 1):
            flags[t] = True
    return flags


def load_scenario(source: str | Path | dict) -> Scenario:
    """Load a scenario from JSON (path or parsed dict).

    Object trajectories are either explicit per-frame [x, y, w, h] lists or
    the linear-motion shorthand {"from": [...], "to": [...]}; visibility is
    true or a list of inclusive [start, end] frame ranges.
    """
    if isinstance(source, dict):
        raw = source
    else:
        with open(source, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    n_frames = int(raw["frames"])
    width, height = raw["dims"]
    objects = [
        SceneObject(
            color=tuple(int(c) for c in obj["color"]),
            trajectory=_expand_trajectory(obj["trajectory"], n_frames),
            visible=_expand_visible(obj.get("visible", True), n_frames),
        )
        for obj in raw["objects"]
    ]
    return Scenario(
        dims=ImageDims(int(width), int(height)),
        n_frames=n_frames,
        background=tuple(int(c) for c in raw.get("background", (0, 0, 0))),
        objects=objects,
        target_index=int(raw.get("target", 0)),
        seed=int(raw.get("seed", 0)),
    )


def _paint(frame: np.ndarray, box: BoundingBox, color: tuple[int, int, int]) -> None:
    height, width = frame.shape[:2]
    x0 = max(0, min(width, round(box.x)))
    x1 = max(0, min(width, round(box.x + box.w)))
    y0 = max(0, min(height, round(box.y)))
    y1 = max(0, min(height, round(box.y + box.h)))
    frame[y0:y1, x0:x1] = color


def render(scenario: Scenario, t: int) -> np.ndarray:
    """Render frame t: background fill, visible objects back to front."""
    if not 0 <= t < scenario.n_frames:
        raise ValueError(f"frame {t} out of range [0, {scenario.n_frames})")
    frame = np.empty((scenario.dims.height, scenario.dims.width, 3), dtype=np.uint8)
    frame[:] = scenario.background
    for obj in scenario.objects:
        if obj.visible[t]:
            _paint(frame, obj.trajectory[t], obj.color)
    return frame


def render_all(scenario: Scenario) -> list[np.ndarray]:
    return [render(scenario, t) for t in range(scenario.n_frames)]


def write_sequence(scenario: Scenario, out_dir: str | Path) -> None:
    """Write frames as 1-based PNGs plus groundtruth.txt in LaSOT format."""
    from PIL import Image

    out = Path(out_dir)
    img_dir = out / "img"
    img_dir.mkdir(parents=True, exist_ok=True)
    for t in range(scenario.n_frames):
        Image.fromarray(render(scenario, t)).save(img_dir / f"{t + 1:08d}.png")
    write_groundtruth(out / "groundtruth.txt", scenario.gt_boxes())


def read_sequence(seq_dir: str | Path) -> tuple[list[np.ndarray], list[BoundingBox]]:
    """Load a sequence written by write_sequence (or any LaSOT-layout dir)."""
    from PIL import Image

    from soi_forge.core import read_groundtruth

    seq = Path(seq_dir)
    gts = read_groundtruth(seq / "groundtruth.txt")
    frames = []
    for t in range(len(gts)):
        path = seq / "img" / f"{t + 1:08d}.png"
        frames.append(np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8))
    return frames, gts


# --- reference tracker -------------------------------------------------------


@dataclass(frozen=True)
class ReferenceTrackerConfig:
    grid_h: int = 48
    grid_w: int = 64
    patch_radius: int = 20
    color_sigma: float = 45.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.grid_h < 1 or self.grid_w < 1 or self.patch_radius < 1:
            raise ValueError("grid dims and patch radius must be positive")
        if self.color_sigma <= 0 or self.noise_sigma < 0:
            raise ValueError("color sigma must be positive, noise sigma non-negative")


class ReferenceTrackerSession:
    """Mean-color correlation tracker over a fixed grid.

    Each cell's score is exp(-|mean patch color - template|^2 / (2 sigma^2))
    plus seeded Gaussian noise; the box map holds the patch rectangle of each
    cell. Fully deterministic given the config seed.
    """

    def __init__(self, config: ReferenceTrackerConfig = ReferenceTrackerConfig()):
        self.config = config
        self.template: np.ndarray | None = None
        self._rng = np.random.default_rng(config.seed)

    @property
    def grid(self) -> tuple[int, int]:
        return (self.config.grid_h, self.config.grid_w)

    def init(self, frame: np.ndarray, box: BoundingBox) -> None:
        self.template = self._region_mean(frame, box)
        self._rng = np.random.default_rng(self.config.seed)

    def set_template_from(self, frame: np.ndarray, box: BoundingBox) -> None:
        """Re-capture the template from a new box (state substitution)."""
        self.template = self._region_mean(frame, box)

    @staticmethod
    def _region_mean(frame: np.ndarray, box: BoundingBox) -> np.ndarray:
        height, width = frame.shape[:2]
        x0 = max(0, min(width - 1, round(box.x)))
        x1 = max(x0 + 1, min(width, round(box.x + box.w)))
        y0 = max(0, min(height - 1, round(box.y)))
        y1 = max(y0 + 1, min(height, round(box.y + box.h)))
        return frame[y0:y1, x0:x1].reshape(-1, 3).mean(axis=0)

    def step(self, frame: np.ndarray) -> TrackerResponse:
        if self.template is None:
            raise RuntimeError("session not ready: init first")
        cfg = self.config
        height, width = frame.shape[:2]
        rad = cfg.patch_radius

        # Patch means for all cells at once via a summed-area table.
        sat = np.zeros((height + 1, width + 1, 3), dtype=np.float64)
        sat[1:, 1:] = frame.astype(np.float64).cumsum(axis=0).cumsum(axis=1)
        cys = (np.arange(cfg.grid_h) + 0.5) * height / cfg.grid_h
        cxs = (np.arange(cfg.grid_w) + 0.5) * width / cfg.grid_w
        y0 = np.clip(np.round(cys - rad).astype(int), 0, height)
        y1 = np.clip(np.round(cys + rad).astype(int), 0, height)
        x0 = np.clip(np.round(cxs - rad).astype(int), 0, width)
        x1 = np.clip(np.round(cxs + rad).astype(int), 0, width)
        area = (y1 - y0)[:, None] * (x1 - x0)[None, :]
        sums = (
            sat[y1][:, x1]
            - sat[y0][:, x1]
            - sat[y1][:, x0]
            + sat[y0][:, x0]
        )
        means = sums / np.maximum(area, 1)[..., None]

        dist_sq = ((means - self.template) ** 2).sum(axis=-1)
        scores = np.exp(-dist_sq / (2.0 * cfg.color_sigma**2))
        if cfg.noise_sigma > 0:
            scores = scores + self._rng.normal(0.0, cfg.noise_sigma, scores.shape)

        boxes = np.empty((4, cfg.grid_h, cfg.grid_w), dtype=np.float64)
        boxes[0] = (cxs - rad)[None, :]
        boxes[1] = (cys - rad)[:, None]
        boxes[2] = 2 * rad
        boxes[3] = 2 * rad

        best = np.unravel_index(int(np.argmax(scores)), scores.shape)
        mapping = GridToImage(scale_x=width / cfg.grid_w, scale_y=height / cfg.grid_h)
        box_map = BoxMap(boxes)
        return TrackerResponse(
            predicted=box_map.box_at(*best),
            confidence=float(scores.max()),
            score_map=ScoreMap(scores, mapping),
            box_map=box_map,
        )


def make_judges(
    n: int,
    base: ReferenceTrackerConfig = ReferenceTrackerConfig(),
    seed: int = 0,
) -> list[ReferenceTrackerConfig]:
    """Derive n deterministic config variants standing in for consensus judges.

    Judges differ in grid resolution, patch radius, and noise seed, which
    approximates the inter-tracker disagreement the voting mechanism needs.
    """
    if n < 1:
        raise ValueError("need at least one judge")
    if n == 1:
        return [base]
    judges = []
    for i in range(n):
        grid_delta = 8 * (i % 2)
        radius_delta = (i % 3) - 1
        judges.append(
            ReferenceTrackerConfig(
                grid_h=base.grid_h - grid_delta,
                grid_w=base.grid_w - grid_delta,
                patch_radius=base.patch_radius + radius_delta,
                color_sigma=base.color_sigma,
                noise_sigma=base.noise_sigma,
                seed=seed * 1000 + i,
            )
        )
    return judges


def appearance_shift_scenario(n_frames: int = 99) -> Scenario:
    """Canonical appearance-shift scene for guidance-correction experiments.

    A red target cruises left to right. From frame 40 to the end an overlay of
    a different color rides exactly on top of it (a permanent appearance
    change), while a look-alike of the original color appears elsewhere. A
    template tracker locks onto the look-alike for good; a single correction
    that re-captures the template from the true box recovers the rest of the
    sequence, so the ground-truth region holds the target's real current
    appearance at every correctable frame.
    """
    if n_frames <= 41:
        raise ValueError("appearance shift scenario needs frames beyond frame 40")
    last = n_frames - 1
    return load_scenario(
        {
            "dims": [320, 240],
            "frames": n_frames,
            "background": [0, 0, 0],
            "seed": 11,
            "target": 0,
            "objects": [
                # target: strong red
                {
                    "color": [220, 40, 40],
                    "trajectory": {"from": [20, 100, 40, 40], "to": [100, 100, 40, 40]},
                    "visible": True,
                },
                # overlay: the target's new appearance, chosen orthogonal to
                # the old color so black-background dilution of either color
                # never approaches the other template
                {
                    "color": [180, 150, 150],
                    "trajectory": {"from": [20, 100, 40, 40], "to": [100, 100, 40, 40]},
                    "visible": [[40, last]],
                },
                # look-alike of the original appearance, parked off the path
                {
                    "color": [150, 27, 27],
                    "trajectory": {"from": [250, 40, 40, 40], "to": [250, 40, 40, 40]},
                    "visible": [[40, last]],
                },
            ],
        }
    )


def crossover_scenario(n_frames: int = 99) -> Scenario:
    """Canonical distractor-crossover scene.

    A red target cruises left to right. On frames 40-80 an off-color occluder
    covers it exactly while a near-template distractor appears elsewhere, so a
    template tracker initialized on the target locks onto the distractor for
    exactly that window and re-acquires the target afterwards.
    """
    if n_frames <= 81:
        raise ValueError("crossover scenario needs frames beyond the 40-80 window")
    return load_scenario(
        {
            "dims": [320, 240],
            "frames": n_frames,
            "background": [0, 0, 0],
            "seed": 7,
            "target": 0,
            "objects": [
                # target: strong red
                {
                    "color": [220, 40, 40],
                    "trajectory": {"from": [20, 100, 40, 40], "to": [100, 100, 40, 40]},
                    "visible": True,
                },
                # occluder: dimmed target color, same path, drawn on top during
                # the window; farther from the template than the distractor
                {
                    "color": [121, 22, 22],
                    "trajectory": {"from": [20, 100, 40, 40], "to": [100, 100, 40, 40]},
                    "visible": [[40, 80]],
                },
                # distractor: near-template red, parked away from the path
                {
                    "color": [150, 27, 27],
                    "trajectory": {"from": [250, 40, 40, 40], "to": [250, 40, 40, 40]},
                    "visible": [[40, 80]],
                },
            ],
        }
    )
