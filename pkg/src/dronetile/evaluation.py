"""AP50 per video and its unweighted average across videos."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import BoundingBox, Detection, iou
from .temporal import VideoDetections

INTERP_METHODS = ("allpoints", "11point")


class UnknownVideoError(ValueError):
    pass


@dataclass
class GroundTruth:
    video_id: str
    entries: dict[int, list[BoundingBox]] = field(default_factory=dict)

    def __post_init__(self):
        for t in self.entries:
            if t < 0:
                raise ValueError(f"negative frame index {t}")
        self.entries = {int(t): list(self.entries[t]) for t in sorted(self.entries)}

    @property
    def n_boxes(self) -> int:
        return sum(len(b) for b in self.entries.values())


@dataclass(frozen=True)
class VideoScore:
    ap50: float
    tp: int
    fp: int
    fn: int
    n_gt: int


@dataclass
class EvalReport:
    per_video: dict[str, VideoScore]
    average_ap50: float

    def to_rows(self) -> list[tuple]:
        rows = [(vid, s.ap50, s.tp, s.fp, s.fn, s.n_gt) for vid, s in self.per_video.items()]
        tot = [sum(r[i] for r in rows) for i in range(2, 6)]
        rows.append(("Average", self.average_ap50, *tot))
        return rows

    def format_table(self) -> str:
        lines = [f"{'video':<40} {'ap50':>8} {'tp':>6} {'fp':>6} {'fn':>6} {'n_gt':>6}"]
        for vid, ap, tp, fp, fn, n in self.to_rows():
            lines.append(f"{vid:<40} {ap:>8.4f} {tp:>6} {fp:>6} {fn:>6} {n:>6}")
        return "\n".join(lines)


def match_detections(
    dets: Sequence[Detection], gts: Sequence[BoundingBox], iou_min: float = 0.5
) -> list[tuple[Detection, bool]]:
    """Greedy matching within one frame.

    Detections are visited by descending score; each takes the still
    unmatched ground-truth box of highest IoU, provided it reaches ``iou_min``.
    Returns ``(detection, is_tp)`` pairs in visiting order.
    """
    taken = [False] * len(gts)
    out = []
    for d in sorted(dets, key=lambda d: -d.score):
        best, best_iou = -1, iou_min
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            v = iou(d.box, g)
            if v >= best_iou and (best < 0 or v > best_iou):
                best, best_iou = j, v
        if best >= 0:
            taken[best] = True
        out.append((d, best >= 0))
    return out


def average_precision(
    flags: Sequence[bool], scores: Sequence[float], n_gt: int, interp: str = "allpoints"
) -> float:
    """Area under the precision envelope of a ranked TP/FP list.

    Ties in score put false positives first so ambiguous rankings give the
    lower AP. With no ground truth, AP is 1.0 for an empty list, else 0.0.
    """
    if interp not in INTERP_METHODS:
        raise ValueError(f"unknown interpolation {interp!r}")
    if n_gt < 0:
        raise ValueError("n_gt must be non-negative")
    if len(flags) != len(scores):
        raise ValueError("flags and scores differ in length")
    if n_gt == 0:
        return 1.0 if len(flags) == 0 else 0.0
    if len(flags) == 0:
        return 0.0

    tp_arr = np.asarray(flags, dtype=bool)
    sc = np.asarray(scores, dtype=float)
    order = np.lexsort((tp_arr, -sc))
    tp = np.cumsum(tp_arr[order])
    fp = np.cumsum(~tp_arr[order])
    recall = tp / n_gt
    precision = tp / (tp + fp)

    if interp == "11point":
        ap = 0.0
        for r in np.linspace(0.0, 1.0, 11):
            above = precision[recall >= r]
            ap += above.max() if above.size else 0.0
        return float(ap / 11.0)

    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    idx = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def score_video(
    dets: VideoDetections | Iterable[Detection],
    gt: GroundTruth,
    iou_min: float = 0.5,
    interp: str = "allpoints",
    label: str = "drone",
) -> VideoScore:
    all_dets = dets.all_detections() if isinstance(dets, VideoDetections) else list(dets)
    by_frame: dict[int, list[Detection]] = {}
    for d in all_dets:
        if d.label == label:
            by_frame.setdefault(d.frame, []).append(d)

    flags: list[bool] = []
    scores: list[float] = []
    for t, frame_dets in by_frame.items():
        for d, ok in match_detections(frame_dets, gt.entries.get(t, []), iou_min):
            flags.append(ok)
            scores.append(d.score)
    n_gt = gt.n_boxes
    tp = sum(flags)
    return VideoScore(
        ap50=average_precision(flags, scores, n_gt, interp),
        tp=tp,
        fp=len(flags) - tp,
        fn=n_gt - tp,
        n_gt=n_gt,
    )


def evaluate(
    detections: Mapping[str, VideoDetections | Sequence[Detection]] | Iterable[VideoDetections],
    gt: Mapping[str, GroundTruth] | Iterable[GroundTruth],
    iou_min: float = 0.5,
    interp: str = "allpoints",
) -> EvalReport:
    """Score every ground-truth video; videos without detections score as all misses."""
    if not isinstance(detections, Mapping):
        detections = {v.video_id: v for v in detections}
    if not isinstance(gt, Mapping):
        gt = {g.video_id: g for g in gt}
    unknown = sorted(set(detections) - set(gt))
    if unknown:
        raise UnknownVideoError(f"detections for videos without ground truth: {unknown}")

    per_video = {}
    for vid in sorted(gt):
        per_video[vid] = score_video(detections.get(vid, ()), gt[vid], iou_min, interp)
    average = float(np.mean([s.ap50 for s in per_video.values()])) if per_video else 0.0
    return EvalReport(per_video, average)
