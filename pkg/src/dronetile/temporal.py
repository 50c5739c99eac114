"""
Temporal gap filling
====================

Missed detections are recovered by bracketing: an object seen shortly before
and shortly after a frame, with overlapping boxes and the same label, is
linearly interpolated into that frame unless it is already detected there,
would sit near the image border, or would duplicate an existing box.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .geometry import BoundingBox, Detection, iou

INTERPOLATED = "interpolated"


@dataclass
class VideoDetections:
    video_id: str
    frame_size: tuple[int, int]
    frames: dict[int, list[Detection]] = field(default_factory=dict)
    frame_stride: int = 1

    def __post_init__(self):
        if self.frame_stride < 1:
            raise ValueError("frame_stride must be positive")
        w, h = self.frame_size
        if w <= 0 or h <= 0:
            raise ValueError(f"invalid frame size {self.frame_size}")
        self.frame_size = (w, h)
        self.frames = {int(t): list(self.frames[t]) for t in sorted(self.frames)}
        for t, dets in self.frames.items():
            if t < 0:
                raise ValueError(f"negative frame index {t}")
            for d in dets:
                b = d.box
                if b.x1 < 0 or b.y1 < 0 or b.x2 > w or b.y2 > h:
                    raise ValueError(f"{self.video_id} frame {t}: box {b.as_tuple()} outside {w}x{h}")

    @classmethod
    def from_detections(
        cls,
        video_id: str,
        frame_size: tuple[int, int],
        detections: Sequence[Detection],
        timeline: Sequence[int] = (),
        frame_stride: int = 1,
    ) -> VideoDetections:
        frames: dict[int, list[Detection]] = {int(t): [] for t in timeline}
        for d in detections:
            frames.setdefault(d.frame, []).append(d)
        return cls(video_id, frame_size, frames, frame_stride)

    def all_detections(self) -> list[Detection]:
        return [d for dets in self.frames.values() for d in dets]

    def __len__(self) -> int:
        return sum(len(v) for v in self.frames.values())


@dataclass(frozen=True)
class TemporalConfig:
    window: int = 6
    match_iou: float = 0.1
    border_margin: float = 0.02  # fraction of max(W, H)
    veto_iou: float = 0.3
    confidence_divisor: float = 2.0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be a positive number of frames")
        for name in ("match_iou", "veto_iou"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} {v} outside [0, 1]")
        if self.border_margin < 0:
            raise ValueError("border_margin must be non-negative")
        if self.confidence_divisor <= 0:
            raise ValueError("confidence_divisor must be positive")


def lerp_box(a: BoundingBox, b: BoundingBox, t: float) -> BoundingBox:
    return BoundingBox(
        a.x1 + (b.x1 - a.x1) * t,
        a.y1 + (b.y1 - a.y1) * t,
        a.x2 + (b.x2 - a.x2) * t,
        a.y2 + (b.y2 - a.y2) * t,
    )


def interpolated_score(before: float, after: float, divisor: float) -> float:
    return ((before + after) / 2.0) / divisor


def _near_border(box: BoundingBox, width: float, height: float, margin: float) -> bool:
    return box.x1 < margin or box.y1 < margin or box.x2 > width - margin or box.y2 > height - margin


def _nearest_partner(
    anchor: Detection, side: Sequence[Sequence[Detection]], match_iou: float
) -> tuple[int, Detection] | None:
    """First timeline step (1-based) on one side holding a same-label match; best score wins ties."""
    for step, dets in enumerate(side, 1):
        hits = [d for d in dets if d.label == anchor.label and iou(anchor.box, d.box) >= match_iou]
        if hits:
            return step, max(hits, key=lambda d: d.score)
    return None


def _candidates(
    originals: list[list[Detection]], frames: list[int], pos: int, cfg: TemporalConfig
) -> list[tuple[float, int, int, Detection]]:
    lo = max(0, pos - cfg.window)
    hi = min(len(frames), pos + cfg.window + 1)
    backward = [originals[p] for p in range(pos - 1, lo - 1, -1)]
    forward = [originals[p] for p in range(pos + 1, hi)]
    present = originals[pos]
    t = frames[pos]

    out = []
    for a, side_dets in enumerate(backward, 1):
        for before in sorted(side_dets, key=lambda d: -d.score):
            found = _nearest_partner(before, forward, cfg.match_iou)
            if found is None:
                continue
            b, after = found
            if any(
                e.label == before.label
                and (iou(e.box, before.box) >= cfg.match_iou or iou(e.box, after.box) >= cfg.match_iou)
                for e in present
            ):
                continue
            # weight by frame distance; equals a / (a + b) on a uniform timeline
            t0, t1 = before.frame, after.frame
            box = lerp_box(before.box, after.box, (t - t0) / (t1 - t0))
            score = interpolated_score(before.score, after.score, cfg.confidence_divisor)
            d = Detection(box, before.label, min(1.0, score), t, INTERPOLATED)
            out.append((score, a + b, a, d))
    out.sort(key=lambda c: (-c[0], c[1], c[2]))
    return out


def interpolate_gaps(v: VideoDetections, cfg: TemporalConfig = TemporalConfig()) -> VideoDetections:
    """Return a copy of ``v`` with gap-filling detections appended per frame.

    Only original (non-interpolated) detections seed candidates, and they are
    never altered, so a second pass over the output adds nothing.
    """
    frames = list(v.frames)
    if not frames:
        return VideoDetections(v.video_id, v.frame_size, {}, v.frame_stride)
    width, height = v.frame_size
    margin = cfg.border_margin * max(width, height)
    originals = [[d for d in v.frames[t] if d.source != INTERPOLATED] for t in frames]

    result: dict[int, list[Detection]] = {}
    for pos, t in enumerate(frames):
        existing = list(v.frames[t])
        added: list[Detection] = []
        for _, _, _, cand in _candidates(originals, frames, pos, cfg):
            if _near_border(cand.box, width, height, margin):
                continue
            if any(iou(cand.box, e.box) >= cfg.veto_iou for e in existing + added):
                continue
            added.append(cand)
        result[t] = existing + added
    return VideoDetections(v.video_id, v.frame_size, result, v.frame_stride)
