"""Merge full-frame and tile detections of one frame into a single deduplicated set."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .geometry import LABELS, Detection, clip, nms, remap
from .tiling import TilePlan, TileWindow

DEFAULT_NMS_IOU = 0.1
DEFAULT_SCORE_THRESHOLD = 0.375


class PlanMismatchError(ValueError):
    """Detections refer to a window the tile plan does not contain."""


@dataclass(frozen=True)
class FusionConfig:
    nms_iou: float = DEFAULT_NMS_IOU
    score_threshold: float = DEFAULT_SCORE_THRESHOLD
    report_labels: frozenset[str] = field(default_factory=lambda: frozenset({"drone"}))
    class_aware: bool = True

    def __post_init__(self):
        if not 0.0 <= self.nms_iou <= 1.0:
            raise ValueError(f"nms_iou {self.nms_iou} outside [0, 1]")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError(f"score_threshold {self.score_threshold} outside [0, 1]")
        object.__setattr__(self, "report_labels", frozenset(self.report_labels))
        unknown = self.report_labels - set(LABELS)
        if unknown:
            raise ValueError(f"unknown report labels {sorted(unknown)}")


def _window_name(key: str | TileWindow) -> str:
    return key.name if isinstance(key, TileWindow) else key


def fuse_frame(
    per_source: Mapping[str | TileWindow, Sequence[Detection]],
    plan: TilePlan,
    cfg: FusionConfig = FusionConfig(),
) -> list[Detection]:
    """Remap and clip, threshold, class-aware NMS, then keep reported labels.

    Sources are pooled in plan order whatever order the mapping has, so the
    stable NMS tie-break makes the result independent of how callers built
    ``per_source``. Output is sorted by score, highest first.
    """
    by_name: dict[str, list[Detection]] = {}
    for key, dets in per_source.items():
        name = _window_name(key)
        by_name.setdefault(name, []).extend(dets)

    known = {w.name for w in plan}
    stray = sorted(set(by_name) - known)
    if stray:
        raise PlanMismatchError(f"detections for windows {stray} absent from the plan")

    pooled: list[Detection] = []
    for window in plan:
        for d in by_name.get(window.name, ()):
            d = remap(d, window.origin_x, window.origin_y)
            d = d.with_box(clip(d.box, plan.frame_width, plan.frame_height))
            if d.score >= cfg.score_threshold:
                pooled.append(d)

    kept = nms(pooled, cfg.nms_iou, class_aware=cfg.class_aware)
    return [d for d in kept if d.label in cfg.report_labels]
