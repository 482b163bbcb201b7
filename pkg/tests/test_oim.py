import json

import numpy as np
import pytest

from soi_forge.confmap import BoxMap, ScoreMap
from soi_forge.core import BoundingBox, iou
from soi_forge.oim import (
    MASK_GRAY,
    OimTrace,
    apply_mask,
    detect_drift,
    run_oim,
    write_trace_jsonl,
)
from soi_forge.trackerlink import TrackerResponse


def oracle_mask(frame, candidates, gt):
    """Per-pixel membership reimplementation of the masking rule."""
    h, w = frame.shape[:2]

    def inside(box, px, py):
        x0, x1 = round(box.x), round(box.x + box.w)
        y0, y1 = round(box.y), round(box.y + box.h)
        return x0 <= px < x1 and y0 <= py < y1

    out = frame.copy()
    for py in range(h):
        for px in range(w):
            if inside(gt, px, py):
                continue  # restore wins
            if any(inside(c, px, py) for c in candidates):
                out[py, px] = MASK_GRAY
    return out


def random_mask_case(rng, h=24, w=32):
    frame = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    n = int(rng.integers(1, 5))
    cands = []
    for _ in range(n):
        bw, bh = rng.uniform(2, 20, 2)
        # allow boxes partly outside the image to exercise clamping
        x = rng.uniform(-5, w - 2)
        y = rng.uniform(-5, h - 2)
        cands.append(BoundingBox(x, y, bw, bh))
    gw, gh = rng.uniform(3, 15, 2)
    gt = BoundingBox(rng.uniform(0, w - gw), rng.uniform(0, h - gh), gw, gh)
    return frame, cands, gt


class TestDetectDrift:
    def test_strict_threshold(self):
        gt = BoundingBox(0, 0, 10, 10)
        assert not detect_drift(gt, gt)
        # IoU exactly tau is not drift
        assert not detect_drift(BoundingBox(0, 0, 10, 6), BoundingBox(0, 0, 10, 10), tau=0.6)
        assert detect_drift(BoundingBox(0, 0, 10, 5.9), BoundingBox(0, 0, 10, 10), tau=0.6)


class TestApplyMask:
    def test_exact_gray_region(self):
        frame = np.full((20, 30, 3), 200, dtype=np.uint8)
        out = apply_mask(frame, [BoundingBox(5, 4, 10, 8)], BoundingBox(25, 15, 4, 4))
        assert (out[4:12, 5:15] == MASK_GRAY).all()
        untouched = np.ones((20, 30), dtype=bool)
        untouched[4:12, 5:15] = False
        assert (out[untouched] == 200).all()

    def test_restore_wins_over_candidate(self):
        rng = np.random.default_rng(0)
        frame = rng.integers(0, 256, size=(20, 30, 3), dtype=np.uint8)
        gt = BoundingBox(8, 6, 6, 6)
        out = apply_mask(frame, [BoundingBox(0, 0, 30, 20)], gt)
        assert (out[6:12, 8:14] == frame[6:12, 8:14]).all()
        assert (out[0, 0] == MASK_GRAY).all()

    def test_input_frame_not_mutated(self):
        frame = np.zeros((10, 10, 3), dtype=np.uint8)
        before = frame.copy()
        apply_mask(frame, [BoundingBox(1, 1, 5, 5)], BoundingBox(7, 7, 2, 2))
        assert (frame == before).all()

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        frame, cands, gt = random_mask_case(rng)
        once = apply_mask(frame, cands, gt)
        twice = apply_mask(once, cands, gt)
        assert (once == twice).all()

    def test_rejects_wrong_dtype(self):
        with pytest.raises(ValueError):
            apply_mask(np.zeros((10, 10, 3), dtype=np.float32),
                       [], BoundingBox(0, 0, 1, 1))

    def test_rejects_missing_channel(self):
        with pytest.raises(ValueError):
            apply_mask(np.zeros((10, 10), dtype=np.uint8), [], BoundingBox(0, 0, 1, 1))

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_per_pixel_oracle(self, seed):
        rng = np.random.default_rng(seed)
        frame, cands, gt = random_mask_case(rng)
        assert (apply_mask(frame, cands, gt) == oracle_mask(frame, cands, gt)).all()


class ScriptedSession:
    """Session stub with a fixed per-frame drift script.

    Frames in `drift_at` predict a far-off box with a two-peak response; all
    other frames echo the ground truth with a single peak.
    """

    def __init__(self, gts, drift_at):
        self.gts = gts
        self.drift_at = set(drift_at)
        self.inputs = []
        self.t = 0

    def init(self, frame, box):
        self.t = 0
        self.inputs = [frame]

    def step(self, frame):
        self.t += 1
        self.inputs.append(frame)
        gt = self.gts[self.t]
        v = np.zeros((16, 16))
        bm = np.zeros((4, 16, 16))
        v[2, 2] = 1.0
        bm[:, 2, 2] = gt.as_list()
        if self.t in self.drift_at:
            v[10, 10] = 1.0
            bm[:, 10, 10] = [200, 100, 20, 20]
            pred = BoundingBox(200, 100, 20, 20)
        else:
            pred = gt
        return TrackerResponse(predicted=pred, confidence=float(v.max()),
                               score_map=ScoreMap(v), box_map=BoxMap(bm))


class FailingSession(ScriptedSession):
    def __init__(self, gts, fail_at):
        super().__init__(gts, drift_at=set())
        self.fail_at = fail_at

    def step(self, frame):
        if self.t + 1 == self.fail_at:
            raise RuntimeError("connection reset")
        return super().step(frame)


def make_frames(n, h=120, w=160):
    rng = np.random.default_rng(42)
    return [rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8) for _ in range(n)]


class TestRunOim:
    def test_no_drift_means_raw_inputs(self):
        n = 6
        gts = [BoundingBox(10, 10, 30, 30)] * n
        frames = make_frames(n)
        session = ScriptedSession(gts, drift_at=set())
        trace = run_oim(frames, gts, session)
        assert len(trace.records) == n - 1
        assert not any(r.drift for r in trace.records)
        assert not any(r.input_was_masked for r in trace.records)
        for given, raw in zip(session.inputs, frames):
            assert (given == raw).all()

    def test_drift_masks_next_frame(self):
        n = 6
        gts = [BoundingBox(10, 10, 30, 30)] * n
        frames = make_frames(n)
        session = ScriptedSession(gts, drift_at={2})
        trace = run_oim(frames, gts, session)
        rec = trace.records[1]  # frame 2
        assert rec.drift
        assert rec.masked_candidates  # both decoded peaks
        assert trace.records[2].input_was_masked
        expected = apply_mask(frames[3], rec.masked_candidates, gts[3])
        assert (session.inputs[3] == expected).all()
        # frame 4 input is raw again once tracking recovers
        assert (session.inputs[4] == frames[4]).all()

    def test_drift_on_last_frame_masks_nothing(self):
        n = 4
        gts = [BoundingBox(10, 10, 30, 30)] * n
        session = ScriptedSession(gts, drift_at={3})
        trace = run_oim(make_frames(n), gts, session)
        assert trace.records[-1].drift
        assert trace.records[-1].masked_candidates == []

    def test_session_failure_returns_partial_trace(self):
        n = 8
        gts = [BoundingBox(10, 10, 30, 30)] * n
        session = FailingSession(gts, fail_at=4)
        trace = run_oim(make_frames(n), gts, session)
        assert trace.error is not None
        assert "frame 4" in trace.error
        assert len(trace.records) == 3

    def test_too_short_sequence_rejected(self):
        gts = [BoundingBox(0, 0, 5, 5)]
        with pytest.raises(ValueError):
            run_oim(make_frames(1), gts, ScriptedSession(gts, set()))

    def test_tau_zero_never_masks(self):
        # with tau=0 drift is impossible, so the loop degenerates to a plain run
        n = 6
        gts = [BoundingBox(10, 10, 30, 30)] * n
        frames = make_frames(n)
        session = ScriptedSession(gts, drift_at={2, 3})
        trace = run_oim(frames, gts, session, tau=0.0)
        assert not any(r.drift for r in trace.records)
        for given, raw in zip(session.inputs, frames):
            assert (given == raw).all()

    def test_dump_dir_writes_masked_frames(self, tmp_path):
        n = 6
        gts = [BoundingBox(10, 10, 30, 30)] * n
        session = ScriptedSession(gts, drift_at={2})
        run_oim(make_frames(n), gts, session, dump_dir=tmp_path)
        assert (tmp_path / "masked_00000003.png").exists()


class TestTraceOutput:
    def test_jsonl_roundtrip(self, tmp_path):
        n = 6
        gts = [BoundingBox(10, 10, 30, 30)] * n
        session = ScriptedSession(gts, drift_at={2})
        trace = run_oim(make_frames(n), gts, session)
        path = tmp_path / "trace.jsonl"
        write_trace_jsonl(path, trace)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(rows) == n - 1
        assert rows[1]["drift"] is True
        assert rows[2]["input_was_masked"] is True
        assert rows[0]["predicted"] == gts[1].as_list()

    def test_error_appended(self, tmp_path):
        trace = OimTrace(records=[], error="session failed at frame 1: boom")
        path = tmp_path / "trace.jsonl"
        write_trace_jsonl(path, trace)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert rows == [{"error": "session failed at frame 1: boom"}]
