"""
On-disk formats
===============

* ground truth: one object per line, ``frame x y w h`` (pixels, top-left + size)
* normalized labels: ``class_id cx cy w h`` in [0, 1]; class 0 = drone, 1 = bird
* detections: JSON lines carrying exactly the :class:`DetectionRecord` fields
* frame manifests: ``video frame path`` lines
* flat ``key = value`` configuration files

Parsers reject anything they would otherwise have to coerce, including
NaN and infinities. Serializers write floats in shortest round-trip form so
``parse(serialize(x)) == x`` bit for bit.
"""

from __future__ import annotations

import configparser
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

from .geometry import LABELS, SOURCES, BoundingBox, Detection
from .evaluation import GroundTruth

CLASS_IDS = {0: "drone", 1: "bird"}
CLASS_OF_LABEL = {v: k for k, v in CLASS_IDS.items()}
RECORD_FIELDS = ("video", "frame", "label", "x", "y", "w", "h", "score", "source")


class ParseError(ValueError):
    def __init__(self, message: str, lineno: int | None = None, source: str | None = None):
        self.lineno = lineno
        self.source = source
        where = ""
        if source:
            where += f"{source}: "
        if lineno is not None:
            where += f"line {lineno}: "
        super().__init__(where + message)


def format_number(v: float) -> str:
    """Integral values without a decimal point, everything else via ``repr``."""
    v = float(v)
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def _finite(token: str, lineno: int, what: str) -> float:
    try:
        v = float(token)
    except ValueError:
        raise ParseError(f"{what} {token!r} is not a number", lineno) from None
    if not math.isfinite(v):
        raise ParseError(f"{what} {token!r} is not finite", lineno)
    return v


def _content_lines(text: str) -> Iterable[tuple[int, list[str]]]:
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


# -- ground truth -----------------------------------------------------------

def parse_gt_file(text: str, video_id: str = "") -> GroundTruth:
    entries: dict[int, list[BoundingBox]] = {}
    for lineno, parts in _content_lines(text):
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields 'frame x y w h', got {len(parts)}", lineno)
        try:
            frame = int(parts[0])
        except ValueError:
            raise ParseError(f"frame {parts[0]!r} is not an integer", lineno) from None
        if frame < 0:
            raise ParseError(f"negative frame index {frame}", lineno)
        x, y, w, h = (_finite(p, lineno, n) for p, n in zip(parts[1:], ("x", "y", "width", "height")))
        if w < 0:
            raise ParseError(f"negative width {format_number(w)}", lineno)
        if h < 0:
            raise ParseError(f"negative height {format_number(h)}", lineno)
        entries.setdefault(frame, []).append(BoundingBox.from_xywh(x, y, w, h))
    return GroundTruth(video_id, entries)


def serialize_gt(gt: GroundTruth) -> str:
    lines = []
    for frame, boxes in gt.entries.items():
        for b in boxes:
            lines.append(" ".join([str(frame)] + [format_number(v) for v in b.to_xywh()]))
    return "".join(line + "\n" for line in lines)


def read_gt_dir(path: str | os.PathLike) -> dict[str, GroundTruth]:
    """``<video_id>.txt`` files in ``path``, keyed by video id."""
    out = {}
    for p in sorted(Path(path).glob("*.txt")):
        try:
            out[p.stem] = parse_gt_file(p.read_text(encoding="utf-8"), p.stem)
        except ParseError as exc:
            raise ParseError(str(exc), source=str(p)) from None
    return out


# -- normalized labels ------------------------------------------------------

@dataclass(frozen=True)
class NormalizedLabel:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    @property
    def label(self) -> str:
        return CLASS_IDS[self.class_id]

    def to_box(self, image_w: float, image_h: float) -> BoundingBox:
        return BoundingBox(
            (self.cx - self.w / 2) * image_w,
            (self.cy - self.h / 2) * image_h,
            (self.cx + self.w / 2) * image_w,
            (self.cy + self.h / 2) * image_h,
        )

    @classmethod
    def from_box(cls, label: str, box: BoundingBox, image_w: float, image_h: float) -> NormalizedLabel:
        cx, cy = box.center
        return cls(
            CLASS_OF_LABEL[label],
            min(1.0, max(0.0, cx / image_w)),
            min(1.0, max(0.0, cy / image_h)),
            min(1.0, box.width / image_w),
            min(1.0, box.height / image_h),
        )

    def to_line(self) -> str:
        return " ".join([str(self.class_id)] + [format_number(v) for v in (self.cx, self.cy, self.w, self.h)])


def parse_normalized_records(text: str) -> list[NormalizedLabel]:
    out = []
    for lineno, parts in _content_lines(text):
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields 'class cx cy w h', got {len(parts)}", lineno)
        try:
            class_id = int(parts[0])
        except ValueError:
            raise ParseError(f"class id {parts[0]!r} is not an integer", lineno) from None
        if class_id not in CLASS_IDS:
            raise ParseError(f"unknown class id {class_id}", lineno)
        vals = [_finite(p, lineno, n) for p, n in zip(parts[1:], ("cx", "cy", "w", "h"))]
        for name, token, v in zip(("cx", "cy", "w", "h"), parts[1:], vals):
            if not 0.0 <= v <= 1.0:
                raise ParseError(f"{name} {token} outside [0, 1]", lineno)
        out.append(NormalizedLabel(class_id, *vals))
    return out


def serialize_normalized_records(records: Iterable[NormalizedLabel]) -> str:
    return "".join(r.to_line() + "\n" for r in records)


def parse_normalized_label(text: str, image_w: float, image_h: float) -> list[tuple[str, BoundingBox]]:
    """Pixel-space ``(label, box)`` pairs from a normalized label file."""
    out = []
    for r in parse_normalized_records(text):
        try:
            out.append((r.label, r.to_box(image_w, image_h)))
        except ValueError as exc:
            raise ParseError(str(exc)) from None
    return out


# -- detections (JSON lines) ------------------------------------------------

@dataclass(frozen=True)
class DetectionRecord:
    video: str
    frame: int
    label: str
    x: float
    y: float
    w: float
    h: float
    score: float
    source: str
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if self.frame < 0:
            raise ValueError(f"negative frame {self.frame}")
        for name in ("x", "y", "w", "h", "score"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} is not finite")
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative size w={self.w} h={self.h}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        # the wire form carries six decimals; hold exactly what a reader would see
        object.__setattr__(self, "score", quantize_score(self.score))

    @classmethod
    def from_detection(cls, video: str, d: Detection) -> DetectionRecord:
        x, y, w, h = d.box.to_xywh()
        return cls(video, d.frame, d.label, x, y, w, h, d.score, d.source)

    def to_detection(self) -> Detection:
        return Detection(BoundingBox.from_xywh(self.x, self.y, self.w, self.h), self.label, self.score, self.frame, self.source)

    def to_json(self) -> str:
        parts = [
            f'"video": {json.dumps(self.video)}',
            f'"frame": {self.frame}',
            f'"label": {json.dumps(self.label)}',
            f'"x": {format_number(self.x)}',
            f'"y": {format_number(self.y)}',
            f'"w": {format_number(self.w)}',
            f'"h": {format_number(self.h)}',
            f'"score": {self.score:.6f}',
            f'"source": {json.dumps(self.source)}',
        ]
        for k, v in self.extra.items():
            parts.append(f"{json.dumps(k)}: {json.dumps(v)}")
        return "{" + ", ".join(parts) + "}"


def quantize_score(score: float) -> float:
    """The value a score takes after one write/read cycle."""
    return float(f"{score:.6f}")


def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name}")


def parse_detection_line(line: str, lineno: int | None = None, lenient: bool = False) -> DetectionRecord:
    try:
        obj = json.loads(line, parse_constant=_reject_constant)
    except ValueError as exc:
        raise ParseError(f"malformed JSON: {exc}", lineno) from None
    if not isinstance(obj, dict):
        raise ParseError("expected a JSON object", lineno)
    missing = [k for k in RECORD_FIELDS if k not in obj]
    if missing:
        raise ParseError(f"missing field(s) {missing}", lineno)
    extra = {k: v for k, v in obj.items() if k not in RECORD_FIELDS}
    if extra and not lenient:
        raise ParseError(f"unknown field(s) {sorted(extra)}", lineno)

    def num(key: str) -> float:
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParseError(f"field {key!r} must be a number", lineno)
        return float(v)

    frame = obj["frame"]
    if isinstance(frame, bool) or not isinstance(frame, int):
        raise ParseError("field 'frame' must be an integer", lineno)
    for key in ("video", "label", "source"):
        if not isinstance(obj[key], str):
            raise ParseError(f"field {key!r} must be a string", lineno)
    try:
        return DetectionRecord(
            obj["video"], frame, obj["label"], num("x"), num("y"), num("w"), num("h"), num("score"), obj["source"], extra
        )
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc), lineno) from None


def read_detections(src: str | os.PathLike | IO[str], lenient: bool = False) -> list[DetectionRecord]:
    if isinstance(src, (str, os.PathLike)):
        with open(src, encoding="utf-8") as fh:
            return read_detections(fh, lenient)
    out = []
    for lineno, line in enumerate(src, 1):
        if line.strip():
            out.append(parse_detection_line(line, lineno, lenient))
    return out


def write_detections(dst: str | os.PathLike | IO[str], records: Iterable[DetectionRecord]) -> None:
    if isinstance(dst, (str, os.PathLike)):
        Path(dst).parent.mkdir(parents=True, exist_ok=True)
        with open(dst, "w", encoding="utf-8", newline="\n") as fh:
            write_detections(fh, records)
        return
    for r in records:
        dst.write(r.to_json() + "\n")


def canonical_records(records: Iterable[DetectionRecord]) -> list[DetectionRecord]:
    """Video, frame, score descending, then box lexicographic."""
    return sorted(records, key=lambda r: (r.video, r.frame, -r.score, r.x, r.y, r.w, r.h, r.label, r.source))


# -- frame manifests --------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    video: str
    frame: int
    path: str


def parse_manifest(text: str, base_dir: str | os.PathLike | None = None) -> list[ManifestEntry]:
    out = []
    for lineno, parts in _content_lines(text):
        if len(parts) != 3:
            raise ParseError("expected 'video frame path'", lineno)
        try:
            frame = int(parts[1])
        except ValueError:
            raise ParseError(f"frame {parts[1]!r} is not an integer", lineno) from None
        if frame < 0:
            raise ParseError(f"negative frame index {frame}", lineno)
        path = parts[2]
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        out.append(ManifestEntry(parts[0], frame, path))
    return out


def serialize_manifest(entries: Iterable[ManifestEntry], base_dir: str | os.PathLike | None = None) -> str:
    lines = []
    for e in entries:
        path = os.path.relpath(e.path, base_dir) if base_dir is not None else e.path
        lines.append(f"{e.video} {e.frame} {path}\n")
    return "".join(lines)


def group_manifest(entries: Sequence[ManifestEntry]) -> dict[str, list[ManifestEntry]]:
    """Entries per video, ordered by frame index."""
    videos: dict[str, list[ManifestEntry]] = {}
    for e in entries:
        videos.setdefault(e.video, []).append(e)
    for vid, lst in videos.items():
        lst.sort(key=lambda e: e.frame)
        frames = [e.frame for e in lst]
        if len(set(frames)) != len(frames):
            raise ParseError(f"video {vid!r} lists a frame twice")
    return videos


def subsample_frames(frame_indices: Sequence[int], stride: int = 5) -> list:
    """Keep positions 0, stride, 2*stride, ... of an ascending index list."""
    if stride < 1:
        raise ValueError(f"stride must be a positive integer, got {stride}")
    return list(frame_indices[::stride])


# -- flat key = value config ------------------------------------------------

def parse_kv_config(text: str) -> dict[str, str]:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ParseError(f"bad config: {exc}") from None
    return {k.replace("-", "_"): v for k, v in cp["config"].items()}
