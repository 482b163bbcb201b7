"""Walkthrough: consensus mining of interference frames on a synthetic scene.

Renders the bundled "crossover" scenario (a look-alike occluder crosses the
target's path while a second look-alike sits nearby), runs four reference
tracker judges over it, and mines the frames where the judges' confidence
maps show interference. Writes the frame set next to this script as
mining_walkthrough.soi.json.
"""

from pathlib import Path

from soi_forge import mining, synth


def main() -> None:
    scenario = synth.crossover_scenario()
    frames = synth.render_all(scenario)
    gts = scenario.gt_boxes()
    print(f"scenario: {scenario.dims.width}x{scenario.dims.height}, "
          f"{scenario.n_frames} frames, {len(scenario.objects)} objects")

    # Four slightly different judges; frame 0 initializes and never votes.
    inputs = []
    for i, cfg in enumerate(synth.make_judges(4)):
        session = synth.ReferenceTrackerSession(cfg)
        session.init(frames[0], gts[0])
        per_frame: list = [None]
        for t in range(1, scenario.n_frames):
            r = session.step(frames[t])
            per_frame.append((r.score_map, r.box_map, r.predicted))
        inputs.append(per_frame)
        print(f"judge {i}: grid {cfg.grid_h}x{cfg.grid_w}, patch radius {cfg.patch_radius}")

    selected, verdicts = mining.mine_sequence(inputs, gts, scenario.dims)

    flagged = [v.frame_index for v in verdicts if v.soi]
    print(f"\nflagged frames ({len(flagged)}): "
          f"{flagged[0]}..{flagged[-1]}" if flagged else "\nno frames flagged")

    # Show the per-judge status breakdown at one flagged and one clean frame.
    for t in (flagged[len(flagged) // 2] if flagged else 1, 10):
        v = verdicts[t]
        statuses = ", ".join(tv.status.value for tv in v.trackers)
        print(f"frame {t:3d}: soi={v.soi}  judges: {statuses}")

    print(f"\nselected for annotation (interval/scene-change/first-drift rules): "
          f"{selected.frames}")

    out = Path(__file__).with_name("mining_walkthrough.soi.json")
    mining.write_soi_json(out, "crossover", selected, verdicts)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
