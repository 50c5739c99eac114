"""
End-to-end flow
===============

plan -> detect per window -> fuse -> interpolate -> (evaluate) -> (render)

Every stage boundary goes through the detection interchange records, so a
single ``run`` produces the same bytes as chaining the ``detect``, ``fuse``
and ``interpolate`` commands by hand.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .backend import Backend, BackendError
from .evaluation import EvalReport, GroundTruth, evaluate
from .fusion import FusionConfig, fuse_frame
from .geometry import Detection
from .ingest import DetectionRecord, ManifestEntry, canonical_records, group_manifest
from .temporal import TemporalConfig, VideoDetections, interpolate_gaps
from .tiling import DEFAULT_FRACTION, TilePlan, plan_tiles

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    fraction: float = DEFAULT_FRACTION
    whole_only: bool = False
    fusion: FusionConfig = field(default_factory=FusionConfig)
    temporal: TemporalConfig = field(default_factory=TemporalConfig)
    interpolate: bool = True
    jobs: int = 1
    skip_failed_frames: bool = False

    def __post_init__(self):
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")


@dataclass
class VideoInput:
    video_id: str
    frame_size: tuple[int, int]
    frames: list[tuple[int, str | None]]  # (frame index, image path), ascending

    @property
    def timeline(self) -> list[int]:
        return [t for t, _ in self.frames]


@dataclass
class PipelineResult:
    records: list[DetectionRecord]
    videos: dict[str, VideoDetections]
    failures: list[tuple[str, int | None, str]] = field(default_factory=list)
    report: EvalReport | None = None

    @property
    def aborted(self) -> list[str]:
        return sorted({vid for vid, frame, _ in self.failures if frame is None})


@lru_cache(maxsize=64)
def _cached_plan(width: int, height: int, fraction: float) -> TilePlan:
    return plan_tiles(width, height, fraction)


def plan_for(frame_size: tuple[int, int], cfg: PipelineConfig) -> TilePlan:
    plan = _cached_plan(int(frame_size[0]), int(frame_size[1]), cfg.fraction)
    return plan.whole_only() if cfg.whole_only else plan


def videos_from_manifest(entries: Sequence[ManifestEntry], frame_sizes: Mapping[str, tuple[int, int]] | None = None) -> list[VideoInput]:
    """Group manifest lines per video; frame sizes come from the first image unless given."""
    from PIL import Image

    out = []
    for vid, lst in group_manifest(entries).items():
        size = (frame_sizes or {}).get(vid)
        if size is None:
            with Image.open(lst[0].path) as im:
                size = im.size
        out.append(VideoInput(vid, (int(size[0]), int(size[1])), [(e.frame, e.path) for e in lst]))
    return out


# -- stages -----------------------------------------------------------------

def detect_stage(
    videos: Sequence[VideoInput], backend: Backend, cfg: PipelineConfig
) -> tuple[list[DetectionRecord], list[tuple[str, int | None, str]]]:
    """Run the backend on every (frame, window); window-local records out.

    A backend failure drops the whole video unless ``skip_failed_frames``
    is set, in which case only the failing frame is left empty.
    """
    records: list[DetectionRecord] = []
    failures: list[tuple[str, int | None, str]] = []
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        for video in videos:
            plan = plan_for(video.frame_size, cfg)
            tasks = [(t, path, w) for t, path in video.frames for w in plan]

            def call(task, video=video):
                t, path, window = task
                try:
                    return backend.detect(video.video_id, t, path, window), None
                except BackendError as exc:
                    return None, exc

            results = list(pool.map(call, tasks))
            failed_frames = {}
            for (t, _, _), (_, err) in zip(tasks, results):
                if err is not None and t not in failed_frames:
                    failed_frames[t] = err
            if failed_frames and not cfg.skip_failed_frames:
                t, err = next(iter(failed_frames.items()))
                log.error("aborting video %s: frame %d: %s", video.video_id, t, err)
                failures.append((video.video_id, None, f"frame {t}: {err}"))
                continue
            for t, err in failed_frames.items():
                log.warning("video %s frame %d skipped: %s", video.video_id, t, err)
                failures.append((video.video_id, t, str(err)))
            for (t, _, _), (dets, _) in zip(tasks, results):
                if t in failed_frames:
                    continue
                records.extend(DetectionRecord.from_detection(video.video_id, d) for d in dets)
    return records, failures


def _group(records: Iterable[DetectionRecord]) -> dict[str, dict[int, list[DetectionRecord]]]:
    out: dict[str, dict[int, list[DetectionRecord]]] = {}
    for r in records:
        out.setdefault(r.video, {}).setdefault(r.frame, []).append(r)
    return out


def fuse_stage(
    records: Iterable[DetectionRecord],
    plans: TilePlan | Mapping[str, TilePlan],
    cfg: FusionConfig = FusionConfig(),
) -> list[DetectionRecord]:
    out = []
    for vid, frames in _group(records).items():
        plan = plans if isinstance(plans, TilePlan) else plans[vid]
        for t in sorted(frames):
            per_source: dict[str, list[Detection]] = {}
            for r in frames[t]:
                per_source.setdefault(r.source, []).append(r.to_detection())
            for d in fuse_frame(per_source, plan, cfg):
                out.append(DetectionRecord.from_detection(vid, d))
    return canonical_records(out)


def interpolate_stage(
    records: Iterable[DetectionRecord],
    frame_sizes: tuple[int, int] | Mapping[str, tuple[int, int]],
    cfg: TemporalConfig = TemporalConfig(),
    timelines: Mapping[str, Sequence[int]] | None = None,
    stride: int = 1,
) -> list[DetectionRecord]:
    """Gap-fill each video's fused records.

    Without an explicit timeline, a video's frames are every ``stride``-th
    index between its first and last detection.
    """
    out = []
    for vid, frames in _group(records).items():
        size = frame_sizes if isinstance(frame_sizes, tuple) else frame_sizes[vid]
        if timelines is not None and vid in timelines:
            timeline = list(timelines[vid])
        else:
            lo, hi = min(frames), max(frames)
            timeline = list(range(lo, hi + 1, stride))
        dets = [r.to_detection() for rs in frames.values() for r in rs]
        v = VideoDetections.from_detections(vid, size, dets, timeline, stride)
        filled = interpolate_gaps(v, cfg)
        out.extend(DetectionRecord.from_detection(vid, d) for d in filled.all_detections())
    return canonical_records(out)


def records_to_videos(
    records: Iterable[DetectionRecord],
    frame_sizes: tuple[int, int] | Mapping[str, tuple[int, int]],
) -> dict[str, VideoDetections]:
    out = {}
    for vid, frames in _group(records).items():
        size = frame_sizes if isinstance(frame_sizes, tuple) else frame_sizes[vid]
        dets = [r.to_detection() for rs in frames.values() for r in rs]
        out[vid] = VideoDetections.from_detections(vid, size, dets)
    return out


def run_pipeline(
    videos: Sequence[VideoInput],
    backend: Backend,
    cfg: PipelineConfig = PipelineConfig(),
    gt: Mapping[str, GroundTruth] | None = None,
    iou_min: float = 0.5,
    interp: str = "allpoints",
) -> PipelineResult:
    raw, failures = detect_stage(videos, backend, cfg)
    aborted = {vid for vid, frame, _ in failures if frame is None}
    kept = [v for v in videos if v.video_id not in aborted]
    plans = {v.video_id: plan_for(v.frame_size, cfg) for v in kept}
    sizes = {v.video_id: v.frame_size for v in kept}
    fused = fuse_stage(raw, plans, cfg.fusion)
    if cfg.interpolate:
        final = interpolate_stage(fused, sizes, cfg.temporal, {v.video_id: v.timeline for v in kept})
    else:
        final = fused
    by_video = records_to_videos(final, sizes)
    for v in kept:
        by_video.setdefault(v.video_id, VideoDetections(v.video_id, v.frame_size))
    result = PipelineResult(final, by_video, failures)
    if gt is not None:
        result.report = evaluate(by_video, gt, iou_min, interp)
    return result


# -- rendering --------------------------------------------------------------

LABEL_COLORS = {"drone": (255, 40, 40), "bird": (40, 140, 255)}
INTERPOLATED_COLOR = (255, 220, 0)
GT_COLOR = (40, 220, 40)


def box_pixels(box, width: int, height: int) -> tuple[int, int, int, int] | None:
    """Inclusive pixel rectangle covered by a box, clipped to the image."""
    x1 = max(0, math.floor(box.x1))
    y1 = max(0, math.floor(box.y1))
    x2 = min(width - 1, math.ceil(box.x2) - 1)
    y2 = min(height - 1, math.ceil(box.y2) - 1)
    if x2 < x1 or y2 < y1:
        return None
    return x1, y1, x2, y2


def outline_mask(rect: tuple[int, int, int, int], shape: tuple[int, int], thickness: int = 1, dash: int = 0) -> np.ndarray:
    x1, y1, x2, y2 = rect
    mask = np.zeros(shape, dtype=bool)
    for k in range(thickness):
        if x1 + k > x2 - k or y1 + k > y2 - k:
            break
        mask[y1 + k, x1 + k : x2 - k + 1] = True
        mask[y2 - k, x1 + k : x2 - k + 1] = True
        mask[y1 + k : y2 - k + 1, x1 + k] = True
        mask[y1 + k : y2 - k + 1, x2 - k] = True
    if dash:
        yy, xx = np.indices(shape)
        mask &= ((xx + yy) // dash) % 2 == 0
    return mask


def draw_annotations(
    image: np.ndarray,
    detections: Sequence[Detection],
    gt_boxes: Sequence = (),
    show_scores: bool = True,
    thickness: int = 2,
) -> np.ndarray:
    """Boxes drawn onto a copy of ``image``; interpolated detections dashed."""
    from PIL import Image, ImageDraw

    out = np.array(image, dtype=np.uint8, copy=True)
    h, w = out.shape[:2]
    for b in gt_boxes:
        rect = box_pixels(b, w, h)
        if rect is not None:
            out[outline_mask(rect, (h, w), thickness)] = GT_COLOR
    labels = []
    for d in detections:
        rect = box_pixels(d.box, w, h)
        if rect is None:
            continue
        interp = d.source == "interpolated"
        color = INTERPOLATED_COLOR if interp else LABEL_COLORS[d.label]
        out[outline_mask(rect, (h, w), thickness, dash=4 if interp else 0)] = color
        labels.append((rect, f"{d.score:.2f}", color))
    if show_scores and labels:
        im = Image.fromarray(out)
        draw = ImageDraw.Draw(im)
        for (x1, y1, _, _), text, color in labels:
            draw.text((x1, max(0, y1 - 11)), text, fill=color)
        out = np.asarray(im).copy()
    return out


def render_annotations(
    frames: Sequence[ManifestEntry],
    records: Iterable[DetectionRecord],
    out_dir: str | Path,
    gt: Mapping[str, GroundTruth] | None = None,
    show_scores: bool = True,
) -> list[tuple[str, str]]:
    """Write annotated copies of ``frames`` under ``out_dir`` (same file names).

    Returns per-frame errors; a frame whose detections fall outside its
    image, or that cannot be read, is reported and skipped.
    """
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grouped = _group(records)
    errors = []
    for e in frames:
        try:
            with Image.open(e.path) as im:
                img = np.asarray(im.convert("RGB"))
        except OSError as exc:
            errors.append((e.path, str(exc)))
            continue
        h, w = img.shape[:2]
        dets = [r.to_detection() for r in grouped.get(e.video, {}).get(e.frame, [])]
        bad = [d for d in dets if d.box.x2 > w or d.box.y2 > h or d.box.x1 < 0 or d.box.y1 < 0]
        if bad:
            errors.append((e.path, f"detection {bad[0].box.as_tuple()} outside {w}x{h} frame"))
            continue
        gt_boxes = gt[e.video].entries.get(e.frame, []) if gt and e.video in gt else []
        drawn = draw_annotations(img, dets, gt_boxes, show_scores)
        Image.fromarray(drawn).save(out_dir / Path(e.path).name)
    return errors
