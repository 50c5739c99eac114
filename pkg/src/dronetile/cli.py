"""Command line entry point: one subcommand per pipeline stage plus ``run``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import __version__
from .augment import AugmentConfig, TransformConfig, augment_dataset
from .backend import BackendError, MockBackend, MockDetectorConfig, SubprocessBackend
from .evaluation import evaluate
from .fusion import FusionConfig
from .ingest import (
    ParseError,
    canonical_records,
    group_manifest,
    parse_kv_config,
    parse_manifest,
    read_detections,
    read_gt_dir,
    serialize_manifest,
    subsample_frames,
    write_detections,
)
from .pipeline import (
    PipelineConfig,
    detect_stage,
    fuse_stage,
    interpolate_stage,
    render_annotations,
    run_pipeline,
    videos_from_manifest,
)
from .synth import SceneError, parse_scene_spec, write_scene
from .temporal import TemporalConfig
from .tiling import TilePlan, plan_tiles

log = logging.getLogger("dronetile")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _pair(text: str, sep: str, cast=float) -> tuple:
    parts = text.split(sep)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected A{sep}B, got {text!r}")
    try:
        return cast(parts[0]), cast(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric value in {text!r}") from None


def _frame_size(text: str) -> tuple[int, int]:
    return _pair(text.lower(), "x", int)


def _range(text: str) -> tuple[float, float]:
    return _pair(text, ":")


# -- argument groups --------------------------------------------------------

def _add_backend_args(p):
    g = p.add_argument_group("backend")
    g.add_argument("--backend", choices=("mock", "subprocess"), default="mock")
    g.add_argument("--backend-cmd", help="detector executable (may include arguments)")
    g.add_argument("--timeout", type=float, default=60.0, help="seconds per detector call")
    g.add_argument("--skip-failed-frames", action="store_true", help="leave failing frames empty instead of aborting the video")
    g.add_argument("--miss-prob", type=float, default=0.0)
    g.add_argument("--fp-rate", type=float, default=0.0)
    g.add_argument("--jitter", type=float, default=0.0)
    g.add_argument("--score-range", type=_range, default=(0.9, 0.9), metavar="LO:HI")
    g.add_argument("--input-size", type=int, default=None, help="mock: simulated detector input size")
    g.add_argument("--min-area", type=float, default=0.0, help="mock: smallest detectable box area after resize")
    g.add_argument("--fraction", type=float, default=0.55)
    g.add_argument("--whole-only", action="store_true", help="skip the corner tiles")


def _add_fusion_args(p):
    g = p.add_argument_group("fusion")
    g.add_argument("--nms-iou", type=float, default=0.1)
    g.add_argument("--score", type=float, default=0.375, help="confidence threshold")
    g.add_argument("--keep-birds", action="store_true", help="report bird detections too")
    g.add_argument("--class-agnostic", action="store_true", help="let any label suppress any other in NMS")


def _add_temporal_args(p):
    g = p.add_argument_group("temporal")
    g.add_argument("--window", type=int, default=6)
    g.add_argument("--match-iou", type=float, default=0.1)
    g.add_argument("--margin", type=float, default=0.02, help="border margin, fraction of the larger frame side")
    g.add_argument("--veto-iou", type=float, default=0.3)
    g.add_argument("--divisor", type=float, default=2.0, help="confidence divisor for interpolated boxes")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value file of option defaults")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="dronetile", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan-tiles", parents=[common], help="print the crop windows for a frame size")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--fraction", type=float, default=0.55)

    p = sub.add_parser("detect", parents=[common], help="run the backend on every window of every frame")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--gt", type=Path, help="ground-truth directory (mock backend)")
    _add_backend_args(p)

    p = sub.add_parser("fuse", parents=[common], help="merge window detections per frame")
    p.add_argument("--plan", type=Path, required=True)
    p.add_argument("--detections", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--lenient", action="store_true", help="tolerate unknown JSON fields")
    _add_fusion_args(p)

    p = sub.add_parser("interpolate", parents=[common], help="fill detection gaps over time")
    p.add_argument("--detections", type=Path, required=True)
    p.add_argument("--frame-size", type=_frame_size, required=True, metavar="WxH")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--manifest", type=Path, help="frame timeline per video (default: inferred)")
    p.add_argument("--stride", type=int, default=1, help="frame step when inferring the timeline")
    p.add_argument("--lenient", action="store_true")
    _add_temporal_args(p)

    p = sub.add_parser("evaluate", parents=[common], help="AP50 per video against ground truth")
    p.add_argument("--detections", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--interp", choices=("allpoints", "11point"), default="allpoints")
    p.add_argument("--csv", type=Path)
    p.add_argument("--lenient", action="store_true")

    p = sub.add_parser("augment", parents=[common], help="copy-paste augmentation of a labelled image set")
    p.add_argument("--images", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--patches", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--max-instances", type=int, default=3)
    p.add_argument("--scale", type=_range, default=(0.02, 0.15), metavar="MIN:MAX")
    p.add_argument("--delta-e-max", type=float, default=60.0)
    p.add_argument("--attempts", type=int, default=50)
    p.add_argument("--no-transforms", action="store_true")

    p = sub.add_parser("synth", parents=[common], help="render a synthetic scene with ground truth")
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--video-id", default="synth")

    p = sub.add_parser("render", parents=[common], help="draw detections onto frames")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--detections", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--gt", type=Path)
    p.add_argument("--no-scores", action="store_true")

    p = sub.add_parser("run", parents=[common], help="detect, fuse, interpolate and optionally evaluate")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--gt", type=Path)
    p.add_argument("--no-interpolate", action="store_true")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--interp", choices=("allpoints", "11point"), default="allpoints")
    p.add_argument("--csv", type=Path)
    _add_backend_args(p)
    _add_fusion_args(p)
    _add_temporal_args(p)

    p = sub.add_parser("subsample", parents=[common], help="keep every N-th frame of a manifest")
    p.add_argument("--stride", type=int, default=5)
    p.add_argument("--manifest", type=Path, help="input manifest (default: stdin)")
    p.add_argument("--out", type=Path, help="output manifest (default: stdout)")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse twice: config-file values become defaults that explicit flags override."""
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    values = parse_kv_config(args.config.read_text(encoding="utf-8"))
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"{args.config}: unknown option {key!r} for {args.command}")
        if action.nargs == 0:  # store_true flags
            defaults[key] = raw.strip().lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = raw.strip()
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


# -- commands ---------------------------------------------------------------

def _mock_config(args) -> MockDetectorConfig:
    return MockDetectorConfig(
        miss_prob=args.miss_prob,
        fp_rate=args.fp_rate,
        jitter_px=args.jitter,
        score_range=tuple(args.score_range),
        rng_seed=args.seed,
        input_size=args.input_size,
        min_area_px=args.min_area,
    )


def _backend(args):
    if args.backend == "subprocess":
        if not args.backend_cmd:
            raise UsageError("--backend subprocess needs --backend-cmd")
        return SubprocessBackend(args.backend_cmd, args.timeout)
    if args.gt is None:
        raise UsageError("the mock backend needs --gt")
    truth = {vid: g.entries for vid, g in read_gt_dir(args.gt).items()}
    return MockBackend(truth, _mock_config(args))


def _fusion(args) -> FusionConfig:
    labels = {"drone", "bird"} if args.keep_birds else {"drone"}
    return FusionConfig(args.nms_iou, args.score, frozenset(labels), not args.class_agnostic)


def _temporal(args) -> TemporalConfig:
    return TemporalConfig(args.window, args.match_iou, args.margin, args.veto_iou, args.divisor)


def _pipeline_config(args, **extra) -> PipelineConfig:
    return PipelineConfig(
        fraction=args.fraction,
        whole_only=args.whole_only,
        jobs=args.jobs,
        skip_failed_frames=args.skip_failed_frames,
        **extra,
    )


def _load_manifest(path: Path):
    return parse_manifest(path.read_text(encoding="utf-8"), path.parent)


def _write_csv(path: Path, report) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["video", "ap50", "tp", "fp", "fn", "n_gt"])
        for vid, ap, tp, fp, fn, n in report.to_rows():
            w.writerow([vid, f"{ap:.6f}", tp, fp, fn, n])


def cmd_plan_tiles(args) -> int:
    sys.stdout.write(plan_tiles(args.width, args.height, args.fraction).to_text())
    return EXIT_OK


def cmd_detect(args) -> int:
    videos = videos_from_manifest(_load_manifest(args.manifest))
    records, failures = detect_stage(videos, _backend(args), _pipeline_config(args))
    write_detections(args.out, canonical_records(records))
    for vid, frame, msg in failures:
        log.error("%s%s: %s", vid, "" if frame is None else f" frame {frame}", msg)
    return EXIT_BACKEND if any(f is None for _, f, _ in failures) else EXIT_OK


def cmd_fuse(args) -> int:
    plan = TilePlan.from_text(args.plan.read_text(encoding="utf-8"))
    records = read_detections(args.detections, args.lenient)
    write_detections(args.out, fuse_stage(records, plan, _fusion(args)))
    return EXIT_OK


def cmd_interpolate(args) -> int:
    records = read_detections(args.detections, args.lenient)
    timelines = None
    if args.manifest is not None:
        grouped = group_manifest(_load_manifest(args.manifest))
        timelines = {vid: [e.frame for e in lst] for vid, lst in grouped.items()}
    out = interpolate_stage(records, args.frame_size, _temporal(args), timelines, args.stride)
    write_detections(args.out, out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    gt = read_gt_dir(args.gt)
    by_video: dict[str, list] = {}
    for r in read_detections(args.detections, args.lenient):
        by_video.setdefault(r.video, []).append(r.to_detection())
    report = evaluate(by_video, gt, args.iou, args.interp)
    print(report.format_table())
    if args.csv:
        _write_csv(args.csv, report)
    return EXIT_OK


def cmd_augment(args) -> int:
    cfg = AugmentConfig(
        scale_range=tuple(args.scale),
        max_instances=args.max_instances,
        delta_e_max=args.delta_e_max,
        max_placement_attempts=args.attempts,
        rng_seed=args.seed,
        transforms=TransformConfig.disabled() if args.no_transforms else TransformConfig(),
    )
    report = augment_dataset(args.images, args.labels, args.patches, args.out, cfg)
    print(
        f"images {report.images}  augmented {report.augmented}  placements {report.placements}  "
        f"skips {report.skips}  errors {len(report.errors)}"
    )
    return EXIT_DATA if report.errors else EXIT_OK


def cmd_synth(args) -> int:
    scene = parse_scene_spec(args.spec.read_text(encoding="utf-8"))
    manifest = write_scene(scene, args.out, args.video_id)
    print(manifest)
    return EXIT_OK


def cmd_render(args) -> int:
    entries = _load_manifest(args.manifest)
    gt = read_gt_dir(args.gt) if args.gt else None
    errors = render_annotations(entries, read_detections(args.detections), args.out, gt, not args.no_scores)
    for path, msg in errors:
        log.error("%s: %s", path, msg)
    return EXIT_DATA if errors else EXIT_OK


def cmd_run(args) -> int:
    videos = videos_from_manifest(_load_manifest(args.manifest))
    gt = read_gt_dir(args.gt) if args.gt else None
    cfg = _pipeline_config(args, fusion=_fusion(args), temporal=_temporal(args), interpolate=not args.no_interpolate)
    result = run_pipeline(videos, _backend(args), cfg, gt, args.iou, args.interp)
    write_detections(args.out, result.records)
    for vid, frame, msg in result.failures:
        log.error("%s%s: %s", vid, "" if frame is None else f" frame {frame}", msg)
    if result.report is not None:
        print(result.report.format_table())
        if args.csv:
            _write_csv(args.csv, result.report)
    return EXIT_BACKEND if result.aborted else EXIT_OK


def cmd_subsample(args) -> int:
    if args.manifest is not None:
        entries, base = _load_manifest(args.manifest), args.manifest.parent
    else:
        entries, base = parse_manifest(sys.stdin.read()), None
    kept = []
    for lst in group_manifest(entries).values():
        keep = set(subsample_frames([e.frame for e in lst], args.stride))
        kept.extend(e for e in lst if e.frame in keep)
    if args.out is not None:
        out_base = args.out.parent if base is not None else None
        args.out.write_text(serialize_manifest(kept, out_base), encoding="utf-8")
    else:
        sys.stdout.write(serialize_manifest(kept, base))
    return EXIT_OK


COMMANDS = {
    "plan-tiles": cmd_plan_tiles,
    "detect": cmd_detect,
    "fuse": cmd_fuse,
    "interpolate": cmd_interpolate,
    "evaluate": cmd_evaluate,
    "augment": cmd_augment,
    "synth": cmd_synth,
    "render": cmd_render,
    "run": cmd_run,
    "subsample": cmd_subsample,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        try:
            args = _apply_config(parser, argv)
        except SystemExit as exc:  # argparse usage errors, --help, --version
            return exc.code if isinstance(exc.code, int) else EXIT_USAGE
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"dronetile: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as exc:
        print(f"dronetile: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ParseError, SceneError, ValueError, KeyError, OSError) as exc:
        print(f"dronetile: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
