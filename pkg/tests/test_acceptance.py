"""Acceptance gate: one test per shipped guarantee, one printed verdict line each.

Verdict lines go to the terminal reporter, so they appear even when output
capture is on. Every test re-derives its expectation from an independent
oracle or a frozen fixture; none of them consult the implementation under
test for the expected value.
"""

import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest

from soi_forge import confmap, mining, oim, synth
from soi_forge.core import BoundingBox, ImageDims, iou
from soi_forge.eval import (
    build_schedule,
    norm_precision,
    ope_metrics,
    precision_at,
    success_auc,
    vlm_assisted_run,
)
from soi_forge.trackerlink import (
    ProtocolError,
    decode_message,
    encode_message,
    validate_dump,
)

FIXTURES = Path(__file__).parent / "fixtures"


_reporter = None


@pytest.fixture(autouse=True)
def _terminal_reporter(request):
    global _reporter
    _reporter = request.config.pluginmanager.get_plugin("terminalreporter")


def verdict(name: str, ok: bool = True) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if _reporter is not None:
        _reporter.write_line(line)
    else:
        print(line)
    assert ok


# --- 1. peak extraction equals a brute-force oracle ---------------------------

def test_peak_extraction_matches_brute_force_oracle():
    def oracle(values, k, alpha):
        h, w = values.shape
        gmax = values.max()
        half = k // 2
        out = []
        for r in range(h):
            for c in range(w):
                win = values[max(0, r - half):r + half + 1,
                             max(0, c - half):c + half + 1]
                if win.max() >= alpha * gmax and values[r, c] == win.max():
                    out.append((r, c))
        return out

    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    for _ in range(200):
        h = int(rng.integers(8, 49))
        w = int(rng.integers(8, 49))
        values = rng.uniform(0.01, 1.0, size=(h, w))
        k = int(rng.choice([3, 5, 7]))
        alpha = float(rng.uniform(0.3, 0.9))
        got = confmap.extract_peaks(confmap.ScoreMap(values), k=k, alpha=alpha)
        assert got == oracle(values, k, alpha)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"peak oracle sweep took {elapsed:.1f}s"
    verdict("peak extraction matches brute-force oracle on 200 random maps")


# --- 2. candidate dedup equals a greedy oracle --------------------------------

def test_candidate_dedup_matches_greedy_oracle():
    def oracle(boxes, beta):
        kept = []
        for b in boxes:
            if all(iou(b, o) <= beta for o in kept):
                kept.append(b)
        return kept

    rng = np.random.default_rng(7)
    start = time.perf_counter()
    for _ in range(1000):
        gt = BoundingBox(*rng.uniform(0, 60, 2), *rng.uniform(5, 40, 2))
        boxes = [BoundingBox(*rng.uniform(0, 90, 2), *rng.uniform(5, 40, 2))
                 for _ in range(int(rng.integers(0, 12)))]
        beta = float(rng.uniform(0.2, 0.7))
        got = confmap.build_candidate_set(gt, boxes, beta=beta)
        assert got.boxes == oracle([gt] + boxes, beta)
        assert got.boxes[0] == gt
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"dedup sweep took {elapsed:.1f}s"
    verdict("candidate dedup matches order-preserving greedy oracle on 1000 lists")


# --- 3. consensus voting is exhaustively correct -------------------------------

def test_consensus_voting_exhaustive():
    for n in range(1, 7):
        for votes in itertools.product([0, 1], repeat=n):
            assert mining.decide_soi(list(votes)) == (sum(votes) >= n // 2 + 1)
    table = {
        mining.TrackerStatus.CORRECT: 0,
        mining.TrackerStatus.COMPROMISE: 1,
        mining.TrackerStatus.DRIFT: 1,
        mining.TrackerStatus.FAIL: 0,
    }
    for status, vote in table.items():
        assert mining.status_vote(status) == vote
    verdict("consensus voting exhaustively correct for panels up to 6 trackers")


# --- 4. sequence selection equals a predicate replay ---------------------------

def test_sequence_selection_matches_predicate_replay():
    def oracle(flags, gts, dims, interval, sigma, min_area):
        out, last = [], None
        for t in range(len(flags)):
            if not flags[t]:
                continue
            if gts[t].area / (dims.width * dims.height) < min_area:
                continue
            if last is None or t - last >= interval or iou(gts[t], gts[last]) < sigma:
                out.append(t)
                last = t
        return out

    rng = np.random.default_rng(99)
    for _ in range(100):
        n = int(rng.integers(5, 150))
        dims = ImageDims(320, 240)
        flags = [bool(rng.random() < 0.5) for _ in range(n)]
        gts = []
        for _ in range(n):
            w, h = rng.uniform(2, 60, 2)
            gts.append(BoundingBox(rng.uniform(0, 320 - w), rng.uniform(0, 240 - h), w, h))
        interval = int(rng.integers(1, 40))
        sigma = float(rng.uniform(0.1, 0.9))
        min_area = float(rng.choice([0.001, 0.005, 0.02]))
        got = mining.optimize_sequence(flags, gts, dims, interval, sigma, min_area)
        assert got.frames == oracle(flags, gts, dims, interval, sigma, min_area)
    verdict("sequence selection matches predicate replay on 100 random sequences")


# --- 5. masking is per-pixel exact ---------------------------------------------

def test_masking_matches_per_pixel_oracle():
    def oracle(frame, candidates, gt):
        h, w = frame.shape[:2]

        def inside(box, px, py):
            return (round(box.x) <= px < round(box.x + box.w)
                    and round(box.y) <= py < round(box.y + box.h))

        out = frame.copy()
        for py in range(h):
            for px in range(w):
                if inside(gt, px, py):
                    continue
                if any(inside(c, px, py) for c in candidates):
                    out[py, px] = oim.MASK_GRAY
        return out

    rng = np.random.default_rng(5)
    for _ in range(50):
        h, w = 20, 28
        frame = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        cands = [
            BoundingBox(rng.uniform(-5, w - 2), rng.uniform(-5, h - 2),
                        *rng.uniform(2, 18, 2))
            for _ in range(int(rng.integers(1, 5)))
        ]
        gw, gh = rng.uniform(3, 12, 2)
        gt = BoundingBox(rng.uniform(0, w - gw), rng.uniform(0, h - gh), gw, gh)
        assert (oim.apply_mask(frame, cands, gt) == oracle(frame, cands, gt)).all()
    verdict("gray masking matches per-pixel membership oracle on 50 random configs")


# --- 6. masking recovers a drifting tracker ------------------------------------

def test_masking_improves_crossover_tracking(crossover):
    sc, frames, gts = crossover
    start = time.perf_counter()

    baseline = synth.ReferenceTrackerSession()
    baseline.init(frames[0], gts[0])
    baseline_preds = [gts[0]] + [baseline.step(f).predicted for f in frames[1:]]

    trace = oim.run_oim(frames, gts, synth.ReferenceTrackerSession())
    assert trace.error is None
    masked_preds = [gts[0]] + trace.predictions

    delta = ope_metrics(masked_preds, gts).auc - ope_metrics(baseline_preds, gts).auc
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"masking run took {elapsed:.1f}s"
    assert delta >= 0.10, f"masking delta AUC {delta:.4f} below 0.10"
    verdict(f"masking lifts crossover AUC by {delta:.4f} (>= 0.10)")


# --- 7. metric fixtures are exact -----------------------------------------------

def test_metric_fixture_values():
    assert success_auc([1.0] * 9) == pytest.approx(20 / 21, abs=1e-12)
    assert success_auc([0.5] * 9) == pytest.approx(10 / 21, abs=1e-12)
    assert norm_precision([0.25] * 9) == pytest.approx(26 / 51, abs=1e-12)
    assert precision_at([20.0]) == 1.0
    assert precision_at([20.0 + 1e-9]) == 0.0
    gts = [BoundingBox(i, i, 10, 10) for i in range(5)]
    res = ope_metrics(gts, gts)
    assert res.auc == pytest.approx(20 / 21, abs=1e-12)
    assert res.precision == 1.0
    assert res.norm_precision == pytest.approx(1.0, abs=1e-12)
    verdict("metric fixtures exact to 1e-12 (20/21, 10/21, 26/51, boundary at 20px)")


# --- 8. guidance corrections never hurt, longer validity never hurts -------------

def test_guidance_monotonicity(appearance_shift):
    sc, frames, gts = appearance_shift
    lookup = {f.tobytes(): t for t, f in enumerate(frames)}

    def oracle_provider(frame, guidance):
        return gts[lookup[frame.tobytes()]]

    baseline, log = vlm_assisted_run(frames, gts, synth.ReferenceTrackerSession(),
                                     None, None)
    assert log == []
    results = {}
    for validity in (1, 30):
        schedule, skipped = build_schedule([40], {40: "guidance"}, validity)
        assert skipped == []
        results[validity], _ = vlm_assisted_run(
            frames, gts, synth.ReferenceTrackerSession(), schedule, oracle_provider
        )
    assert baseline.auc <= results[1].auc + 1e-9 <= results[30].auc + 2e-9
    assert results[30].auc > baseline.auc + 0.05
    improved = sum(g >= b - 1e-9 for g, b in zip(results[30].ious, baseline.ious))
    assert improved == len(baseline.ious), "a corrected frame scored below baseline"
    verdict(
        f"guidance corrections monotone: base {baseline.auc:.3f} <= "
        f"V1 {results[1].auc:.3f} <= V30 {results[30].auc:.3f}, "
        "no frame degraded"
    )


# --- 9. wire protocol round-trips and dump validation ----------------------------

def test_protocol_roundtrips_and_golden_fixtures(tmp_path):
    rng = np.random.default_rng(11)
    from soi_forge.trackerlink import Blob

    for _ in range(100):
        header = {"type": "step", "frame": int(rng.integers(0, 1 << 16)),
                  "note": "".join(rng.choice(list("xyz- 019")) for _ in range(10))}
        blobs = []
        for i in range(int(rng.integers(0, 3))):
            if rng.random() < 0.5:
                arr = rng.integers(0, 256, size=(int(rng.integers(1, 9)),
                                                 int(rng.integers(1, 9))), dtype=np.uint8)
            else:
                arr = rng.uniform(-4, 4, size=int(rng.integers(1, 20))).astype(np.float32)
            blobs.append(Blob.from_array(f"b{i}", arr))
        got_header, got_blobs = decode_message(encode_message(header, blobs))
        assert got_header == header
        for a, b in zip(got_blobs, blobs):
            assert (a.to_array() == b.to_array()).all()

    # frozen byte fixtures pin the framing across refactors
    raw = (FIXTURES / "msg_ping.bin").read_bytes()
    assert encode_message({"type": "ping"}) == raw

    index = validate_dump(FIXTURES / "sample.soid")
    assert index["frame_count"] == 3

    bad = tmp_path / "bad.soid"
    bad.write_bytes(b"XXXX" + (FIXTURES / "sample.soid").read_bytes()[4:])
    with pytest.raises(ProtocolError):
        validate_dump(bad)
    truncated = tmp_path / "short.soid"
    truncated.write_bytes((FIXTURES / "sample.soid").read_bytes()[:-7])
    with pytest.raises(ProtocolError):
        validate_dump(truncated)
    verdict("wire protocol: 100 round-trips, golden bytes stable, "
            "dump validation accepts/rejects correctly")


# --- 10. annotation validation and noise perturbation ----------------------------

def test_annotation_rules_and_noise():
    from soi_forge.annotations import SoiAnnotation, perturb_noise, validate

    good = SoiAnnotation(
        sequence="s", frame_index=0,
        level1="At the center of the roadway,",
        level2="a small red car",
        level3="is moving toward the intersection",
        level4="to the target's right there is a similar blue car",
    )
    assert validate(good).ok

    broken = SoiAnnotation(
        sequence="s", frame_index=0,
        level1="The roadway",
        level2="small car at 120, 240",
        level3="bounding box moves",
        level4="a similar car nearby",
    )
    rules = {f.rule for f in validate(broken).errors()}
    assert {"L1.preposition", "L1.comma", "L2.article", "L4.anchor",
            "ALL.coordinates", "ALL.box-language"} <= rules

    noisy = perturb_noise(good, keep_ratio=0.5, seed=3)
    for lv in (1, 2, 3, 4):
        n = len(good.level_text(lv).split())
        assert len(noisy.level_text(lv).split()) == math.ceil(0.5 * n)
    assert "noise" in noisy.tags
    full = perturb_noise(good, keep_ratio=1.0, seed=0)
    assert "blue" in full.level2 and "red" in full.level4
    verdict("annotation format rules enforced; noise variant keeps ceil(0.5*n) "
            "tokens and swaps antonyms")


# --- 11. end-to-end consensus mining ---------------------------------------------

def test_end_to_end_consensus_mining(crossover, tmp_path):
    sc, frames, gts = crossover
    inputs = []
    for cfg in synth.make_judges(4):
        session = synth.ReferenceTrackerSession(cfg)
        session.init(frames[0], gts[0])
        per_frame: list = [None]
        for t in range(1, sc.n_frames):
            r = session.step(frames[t])
            per_frame.append((r.score_map, r.box_map, r.predicted))
        inputs.append(per_frame)

    selected, verdicts = mining.mine_sequence(inputs, gts, ImageDims(320, 240))
    flagged = [v.frame_index for v in verdicts if v.soi]
    assert set(flagged) <= set(range(40, 81)), "flags outside the interference window"
    assert selected.frames, "nothing selected"
    assert selected.frames[0] == 40
    assert set(selected.frames) <= set(range(40, 81))

    # rerun must be byte-identical
    paths = []
    for tag in ("a", "b"):
        path = tmp_path / f"{tag}.json"
        mining.write_soi_json(path, "crossover", selected, verdicts)
        paths.append(path)
    repeat, repeat_verdicts = mining.mine_sequence(inputs, gts, ImageDims(320, 240))
    assert repeat.frames == selected.frames
    assert paths[0].read_bytes() == paths[1].read_bytes()
    verdict(f"end-to-end 4-judge mining selects {selected.frames} inside [40, 80], "
            "rerun byte-identical")
