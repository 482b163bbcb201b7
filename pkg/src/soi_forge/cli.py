"""soi-forge command surface.

Exit codes: 0 success, 1 operational error, 2 usage error. Every command
writes a run manifest next to its primary output (or to --manifest).
Hyperparameter flags default to the shipped mining values.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from soi_forge import manifest as manifest_mod


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _manifest_path(explicit: str | None, primary_output: Path) -> Path:
    return Path(explicit) if explicit else primary_output.with_suffix(
        primary_output.suffix + ".manifest.json"
    )


def _config_defaults(ctx: click.Context, param, value):
    """--config file of key=value lines; flags given on the CLI still win."""
    if not value:
        return None
    defaults = {}
    for lineno, line in enumerate(Path(value).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise click.BadParameter(f"{value}:{lineno}: expected key=value")
        key, _, val = line.partition("=")
        defaults[key.strip().replace("-", "_")] = val.strip()
    ctx.default_map = {**(ctx.default_map or {}), **defaults}
    return value


@click.group()
@click.version_option(package_name="soi-forge")
def main() -> None:
    """Similar-object-interference mining, masking, and evaluation toolkit."""


_config_option = click.option(
    "--config", type=click.Path(exists=True, dir_okay=False), callback=_config_defaults,
    expose_value=True, is_eager=True, default=None,
    help="key=value defaults file; explicit flags override.",
)


@main.command("synth")
@click.option("--scenario", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--manifest", "manifest_path", default=None, type=click.Path())
def synth_cmd(scenario: str, out_dir: str, manifest_path: str | None) -> None:
    """Render a scenario: frames as PNG plus groundtruth.txt."""
    from soi_forge import synth

    meta = manifest_mod.start_manifest("synth", {"scenario": scenario, "out": out_dir},
                                       [scenario])
    try:
        sc = synth.load_scenario(scenario)
        synth.write_sequence(sc, out_dir)
    except (ValueError, OSError, KeyError) as exc:
        _fail(str(exc))
    manifest_mod.finish_manifest(meta, _manifest_path(manifest_path,
                                                      Path(out_dir) / "sequence"))
    click.echo(f"wrote {sc.n_frames} frames to {out_dir}")


@main.command("mine")
@_config_option
@click.option("--mode", type=click.Choice(["offline", "online"]), default="offline")
@click.option("--dumps", multiple=True, type=click.Path(exists=True, dir_okay=False),
              help="SOID dump files, one per tracker (offline mode).")
@click.option("--endpoints", multiple=True,
              help="tracker endpoints host:port, one per judge (online mode).")
@click.option("--sequence", "sequence_dir", type=click.Path(exists=True, file_okay=False),
              help="rendered sequence directory (online mode).")
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--dims", nargs=2, type=int, default=None,
              help="image width height (required with --mode offline).")
@click.option("--out", "out_prefix", default="soi", help="output prefix for .json/.csv")
@click.option("--pool-size", default=5, show_default=True)
@click.option("--peak-alpha", default=0.6, show_default=True)
@click.option("--dedup-beta", default=0.4, show_default=True)
@click.option("--tau", default=0.6, show_default=True)
@click.option("--interval", default=30, show_default=True)
@click.option("--scene-sigma", default=0.5, show_default=True)
@click.option("--min-area", default=0.001, show_default=True)
@click.option("--name", "sequence_name", default=None, help="sequence name in outputs")
@click.option("--manifest", "manifest_path", default=None, type=click.Path())
def mine_cmd(config, mode, dumps, endpoints, sequence_dir, gt_path, dims, out_prefix,
             pool_size, peak_alpha, dedup_beta, tau, interval, scene_sigma, min_area,
             sequence_name, manifest_path) -> None:
    """Mine interference frames from tracker dumps or live trackers."""
    from soi_forge import mining, trackerlink
    from soi_forge.core import ImageDims, read_groundtruth

    params = mining.MiningParams(pool_size, peak_alpha, dedup_beta, tau,
                                 interval, scene_sigma, min_area)
    meta = manifest_mod.start_manifest(
        "mine",
        {"mode": mode, "dumps": list(dumps), "endpoints": list(endpoints),
         "gt": gt_path, "dims": dims, **params.__dict__},
        [gt_path, *dumps],
    )
    gts = read_groundtruth(gt_path)
    name = sequence_name

    if mode == "offline":
        if not dumps:
            raise click.UsageError("offline mode requires --dumps")
        if dims is None:
            raise click.UsageError("offline mode requires --dims WIDTH HEIGHT")
        image_dims = ImageDims(*dims)
        tracker_inputs = []
        try:
            for dump in dumps:
                index, per_frame = trackerlink.load_dump_for_mining(dump)
                if len(per_frame) != len(gts):
                    _fail(f"{dump}: {len(per_frame)} frames vs {len(gts)} ground truths")
                tracker_inputs.append(per_frame)
                name = name or index.get("sequence")
        except trackerlink.ProtocolError as exc:
            _fail(str(exc))
    else:
        if not endpoints or sequence_dir is None:
            raise click.UsageError("online mode requires --endpoints and --sequence")
        from soi_forge.synth import read_sequence

        frames, seq_gts = read_sequence(sequence_dir)
        if len(seq_gts) != len(gts):
            _fail("sequence and --gt frame counts differ")
        image_dims = ImageDims(frames[0].shape[1], frames[0].shape[0])
        tracker_inputs = []
        try:
            for i, endpoint in enumerate(endpoints):
                session = trackerlink.Session(
                    trackerlink.SessionConfig(f"judge{i}", endpoint)
                )
                session.init(frames[0], gts[0])
                per_frame: list = [None]
                for frame, gt in zip(frames[1:], gts[1:]):
                    r = session.step(frame)
                    per_frame.append((r.score_map, r.box_map, r.predicted))
                session.close()
                tracker_inputs.append(per_frame)
        except (OSError, trackerlink.ProtocolError) as exc:
            _fail(f"tracker session failed: {exc}")
        name = name or Path(sequence_dir).name

    name = name or Path(gt_path).stem
    result, verdicts = mining.mine_sequence(tracker_inputs, gts, image_dims, params)
    json_path = Path(f"{out_prefix}.json")
    mining.write_soi_json(json_path, name, result, verdicts)
    mining.write_soi_csv(f"{out_prefix}.csv", [(name, t) for t in result.frames])
    manifest_mod.finish_manifest(meta, _manifest_path(manifest_path, json_path))
    click.echo(f"selected {len(result.frames)} SOI frames: {result.frames}")


@main.command("oim")
@_config_option
@click.option("--sequence", "sequence_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--endpoint", default=None, help="tracker endpoint host:port")
@click.option("--tracker", "tracker_kind", default=None,
              type=click.Choice(["reference"]),
              help="use the built-in reference tracker instead of an endpoint")
@click.option("--tau", default=0.6, show_default=True)
@click.option("--pool-size", default=5, show_default=True)
@click.option("--peak-alpha", default=0.6, show_default=True)
@click.option("--out", "out_path", default="oim_trace.jsonl", type=click.Path())
@click.option("--dump-frames", "dump_frames", default=None, type=click.Path())
@click.option("--manifest", "manifest_path", default=None, type=click.Path())
def oim_cmd(config, sequence_dir, endpoint, tracker_kind, tau, pool_size, peak_alpha,
            out_path, dump_frames, manifest_path) -> None:
    """Run the masking harness plus a baseline, reporting both metric sets."""
    from soi_forge import eval as eval_mod
    from soi_forge import oim, synth, trackerlink
    from soi_forge.synth import read_sequence

    if (endpoint is None) == (tracker_kind is None):
        raise click.UsageError("give exactly one of --endpoint or --tracker")
    meta = manifest_mod.start_manifest(
        "oim", {"sequence": sequence_dir, "endpoint": endpoint,
                "tracker": tracker_kind, "tau": tau},
        [Path(sequence_dir) / "groundtruth.txt"],
    )
    frames, gts = read_sequence(sequence_dir)

    def make_session():
        if tracker_kind == "reference":
            return synth.ReferenceTrackerSession()
        return trackerlink.Session(trackerlink.SessionConfig("oim", endpoint))

    try:
        baseline_session = make_session()
        baseline_session.init(frames[0], gts[0])
        baseline_preds = [gts[0]] + [
            baseline_session.step(f).predicted for f in frames[1:]
        ]
        trace = oim.run_oim(frames, gts, make_session(), tau=tau,
                            pool_size=pool_size, peak_alpha=peak_alpha,
                            dump_dir=dump_frames)
    except (OSError, trackerlink.ProtocolError, ValueError) as exc:
        _fail(str(exc))
    if trace.error:
        _fail(trace.error)

    oim.write_trace_jsonl(out_path, trace)
    baseline = eval_mod.ope_metrics(baseline_preds, gts)
    enhanced = eval_mod.ope_metrics([gts[0]] + trace.predictions, gts)
    report = {"baseline": baseline.to_dict(), "oim": enhanced.to_dict(),
              "delta_auc": enhanced.auc - baseline.auc}
    report_path = Path(out_path).with_suffix(".report.json")
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    manifest_mod.finish_manifest(meta, _manifest_path(manifest_path, Path(out_path)))
    click.echo(json.dumps(report["oim"], sort_keys=True))
    click.echo(f"delta AUC vs baseline: {report['delta_auc']:+.4f}")


@main.command("eval")
@click.option("--pred", "pred_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--gt", "gt_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", default=None, type=click.Path())
@click.option("--per-frame-csv", default=None, type=click.Path())
@click.option("--manifest", "manifest_path", default=None, type=click.Path())
def eval_cmd(pred_path, gt_path, out_path, per_frame_csv, manifest_path) -> None:
    """Score a prediction file against ground truth (one x,y,w,h line per frame)."""
    from soi_forge import eval as eval_mod

    meta = manifest_mod.start_manifest("eval", {"pred": pred_path, "gt": gt_path},
                                       [pred_path, gt_path])
    try:
        result = eval_mod.evaluate_files(pred_path, gt_path)
    except ValueError as exc:
        _fail(str(exc))
    out = Path(out_path) if out_path else Path(pred_path).with_suffix(".report.json")
    eval_mod.write_report(out, result, {"pred": str(pred_path), "gt": str(gt_path)})
    if per_frame_csv:
        eval_mod.write_per_frame_csv(per_frame_csv, result)
    manifest_mod.finish_manifest(meta, _manifest_path(manifest_path, out))
    click.echo(json.dumps(result.to_dict(), sort_keys=True))


@main.command("ground-eval")
@click.option("--pairs", "pairs_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help='JSON list of {"pred": [x,y,w,h], "gt": [x,y,w,h]}')
@click.option("--out", "out_path", default=None, type=click.Path())
@click.option("--manifest", "manifest_path", default=None, type=click.Path())
def ground_eval_cmd(pairs_path, out_path, manifest_path) -> None:
    """Grounding success rates (SR@50/75) and mean IoU over prediction pairs."""
    from soi_forge import eval as eval_mod
    from soi_forge.core import BoundingBox

    meta = manifest_mod.start_manifest("ground-eval", {"pairs": pairs_path}, [pairs_path])
    try:
        raw = json.loads(Path(pairs_path).read_text())
        pairs = [(BoundingBox(*item["pred"]), BoundingBox(*item["gt"])) for item in raw]
        result = eval_mod.grounding_metrics(pairs)
    except (ValueError, KeyError, TypeError) as exc:
        _fail(f"bad pairs file: {exc}")
    out = Path(out_path) if out_path else Path(pairs_path).with_suffix(".report.json")
    out.write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    manifest_mod.finish_manifest(meta, _manifest_path(manifest_path, out))
    click.echo(json.dumps(result.to_dict(), sort_keys=True))


@main.command("dump-validate")
@click.argument("dump_file", type=click.Path(exists=True, dir_okay=False))
def dump_validate_cmd(dump_file) -> None:
    """Check a SOID dump file end to end."""
    from soi_forge import trackerlink

    try:
        index = trackerlink.validate_dump(dump_file)
    except trackerlink.ProtocolError as exc:
        _fail(f"invalid dump: {exc}")
    click.echo(f"ok: {index['tracker']}/{index['sequence']}, "
               f"{index['frame_count']} frames, grid {index['grid']}")


@main.command("perturb")
@click.option("--store", "store_path", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--sequence", required=True)
@click.option("--frame", "frame_index", required=True, type=int)
@click.option("--keep-ratio", default=0.5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--write/--print-only", "write_back", default=False)
@click.option("--manifest", "manifest_path", default=None, type=click.Path())
def perturb_cmd(store_path, sequence, frame_index, keep_ratio, seed, write_back,
                manifest_path) -> None:
    """Generate a contradictory noise variant of a stored annotation."""
    from soi_forge.annotations import AnnotationStore, SoiAnnotation, perturb_noise

    meta = manifest_mod.start_manifest(
        "perturb", {"store": store_path, "sequence": sequence, "frame": frame_index,
                    "keep_ratio": keep_ratio, "seed": seed}, [])
    store = AnnotationStore(store_path)
    record = store.get(sequence, frame_index)
    if record is None:
        _fail(f"no record for {sequence}/{frame_index}")
    noisy = perturb_noise(SoiAnnotation.from_dict(record), keep_ratio, seed)
    click.echo(json.dumps(noisy.to_dict(), indent=2, sort_keys=True))
    if write_back:
        store.put(noisy)
    manifest_mod.finish_manifest(
        meta, _manifest_path(manifest_path, Path(store_path) / f"{sequence}.perturb"))


@main.group("annotate")
def annotate_group() -> None:
    """Draft generation, validation, statistics, and the review service."""


@annotate_group.command("draft")
@click.option("--store", "store_path", required=True, type=click.Path(file_okay=False))
@click.option("--soi", "soi_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="mined SOI JSON for one sequence")
@click.option("--sequence-dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--endpoint", default=None, help="grounding endpoint (or SOI_VLM_ENDPOINT)")
@click.option("--model", default="qwen2.5-vl", show_default=True)
@click.option("--manifest", "manifest_path", default=None, type=click.Path())
def annotate_draft_cmd(store_path, soi_path, sequence_dir, endpoint, model,
                       manifest_path) -> None:
    """Batch-generate four-level drafts for mined frames via the VLM client."""
    from soi_forge import vlmclient
    from soi_forge.annotations import AnnotationStore, SoiAnnotation, build_annotation_prompt
    from soi_forge.core import read_groundtruth
    from soi_forge.synth import read_sequence

    meta = manifest_mod.start_manifest(
        "annotate draft", {"store": store_path, "soi": soi_path,
                           "sequence_dir": sequence_dir, "model": model},
        [soi_path])
    soi = json.loads(Path(soi_path).read_text())
    frames, _ = read_sequence(sequence_dir)
    gts = read_groundtruth(Path(sequence_dir) / "groundtruth.txt")
    store = AnnotationStore(store_path)
    drafted = 0
    for t in soi["frames"]:
        reply = vlmclient.ground(
            vlmclient.GroundingRequest(frames[t], build_annotation_prompt(), model=model),
            endpoint=endpoint,
        )
        levels = {}
        for obj in vlmclient._find_json_objects(reply.raw_text):
            if all(f"level{lv}" in obj for lv in (1, 2, 3, 4)):
                levels = {f"level{lv}": str(obj[f"level{lv}"]) for lv in (1, 2, 3, 4)}
                break
        if not levels:
            click.echo(f"frame {t}: no usable draft ({reply.note})", err=True)
            continue
        annotation = SoiAnnotation(sequence=soi["sequence"], frame_index=t,
                                   status="draft", source="vlm", **levels)
        store.put(annotation, gt=gts[t].as_list())
        drafted += 1
    manifest_mod.finish_manifest(
        meta, _manifest_path(manifest_path, Path(store_path) / "draft"))
    click.echo(f"drafted {drafted}/{len(soi['frames'])} annotations")


@annotate_group.command("validate")
@click.option("--store", "store_path", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--sequence", default=None)
def annotate_validate_cmd(store_path, sequence) -> None:
    """Re-validate stored annotations; nonzero exit when errors exist."""
    from soi_forge.annotations import AnnotationStore, validate

    store = AnnotationStore(store_path)
    n_errors = 0
    for annotation in store.all_annotations():
        if sequence and annotation.sequence != sequence:
            continue
        report = validate(annotation)
        for f in report.findings:
            click.echo(f"{annotation.sequence}/{annotation.frame_index} "
                       f"[{f.severity}] {f.rule}: {f.message}")
            if f.severity == "error":
                n_errors += 1
    if n_errors:
        _fail(f"{n_errors} error finding(s)")
    click.echo("all annotations conformant")


@annotate_group.command("stats")
@click.option("--store", "store_path", required=True,
              type=click.Path(exists=True, file_okay=False))
def annotate_stats_cmd(store_path) -> None:
    """Corpus token counts and SOI-frames-per-sequence histogram."""
    from soi_forge.annotations import AnnotationStore, corpus_stats

    stats = corpus_stats(AnnotationStore(store_path).all_annotations())
    click.echo(json.dumps(stats, indent=2, sort_keys=True))


@annotate_group.command("serve")
@click.option("--store", "store_path", required=True, type=click.Path(file_okay=False))
@click.option("--bind", default="127.0.0.1:8787", show_default=True)
@click.option("--frames", "frames_root", default=None,
              type=click.Path(exists=True, file_okay=False))
@click.option("--static", "static_dir", default=None,
              type=click.Path(exists=True, file_okay=False))
def annotate_serve_cmd(store_path, bind, frames_root, static_dir) -> None:
    """Run the annotation review HTTP service (blocking)."""
    from soi_forge.annotations_api import serve_annotations

    serve_annotations(store_path, bind, frames_root, static_dir)


if __name__ == "__main__":
    main()
