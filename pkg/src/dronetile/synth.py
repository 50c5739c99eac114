"""Synthetic videos of rectangles moving at constant velocity, with exact ground truth."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluation import GroundTruth
from .geometry import LABELS, BoundingBox

BACKGROUNDS = ("flat", "gradient", "noise")
TRACK_COLORS = {"drone": (20, 20, 20), "bird": (235, 235, 235)}


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class TrackSpec:
    start_center: tuple[float, float]
    velocity: tuple[float, float]
    size: tuple[float, float]
    label: str = "drone"
    first_frame: int = 0
    last_frame: int | None = None  # None: alive until the scene ends

    def __post_init__(self):
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise SceneError(f"track size {self.size} must be positive")
        if self.last_frame is not None and self.last_frame < self.first_frame:
            raise SceneError("last_frame precedes first_frame")
        if self.label not in LABELS:
            raise SceneError(f"unknown label {self.label!r}")

    def box_at(self, t: int) -> BoundingBox:
        cx = self.start_center[0] + self.velocity[0] * t
        cy = self.start_center[1] + self.velocity[1] * t
        w, h = self.size
        return BoundingBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)

    def alive(self, t: int) -> bool:
        return self.first_frame <= t and (self.last_frame is None or t <= self.last_frame)


@dataclass
class Scene:
    frame_size: tuple[int, int]
    n_frames: int
    tracks: list[TrackSpec]
    background: str = "flat"
    seed: int = 0

    def __post_init__(self):
        if self.background not in BACKGROUNDS:
            raise SceneError(f"unknown background {self.background!r}")
        w, h = self.frame_size
        for i, tr in enumerate(self.tracks):
            last = self.n_frames - 1 if tr.last_frame is None else min(tr.last_frame, self.n_frames - 1)
            for t in range(max(tr.first_frame, 0), last + 1):
                b = tr.box_at(t)
                if b.x1 < 0 or b.y1 < 0 or b.x2 > w or b.y2 > h:
                    raise SceneError(f"track {i} leaves the {w}x{h} frame at frame {t}: {b.as_tuple()}")

    def boxes_at(self, t: int, labels: tuple[str, ...] = LABELS) -> list[tuple[BoundingBox, str]]:
        return [(tr.box_at(t), tr.label) for tr in self.tracks if tr.alive(t) and tr.label in labels]

    def ground_truth(self, video_id: str = "") -> GroundTruth:
        """Drone boxes only; birds stay unlabeled."""
        entries = {}
        for t in range(self.n_frames):
            boxes = [b for b, _ in self.boxes_at(t, ("drone",))]
            if boxes:
                entries[t] = boxes
        return GroundTruth(video_id, entries)

    def render_background(self) -> np.ndarray:
        w, h = self.frame_size
        if self.background == "flat":
            return np.full((h, w, 3), 128, np.uint8)
        if self.background == "gradient":
            ramp = np.linspace(90, 200, w, dtype=np.float64)
            img = np.broadcast_to(ramp[None, :, None], (h, w, 3))
            return np.rint(img).astype(np.uint8)
        rng = np.random.default_rng(self.seed)
        return rng.integers(100, 160, size=(h, w, 3), dtype=np.uint8)

    def render(self, t: int, background: np.ndarray | None = None) -> np.ndarray:
        img = (self.render_background() if background is None else background).copy()
        for box, label in self.boxes_at(t):
            # pixels whose centres fall inside the box; exact for integer boxes
            x1, y1, x2, y2 = (math.ceil(v - 0.5) for v in box.as_tuple())
            img[y1:y2, x1:x2] = TRACK_COLORS[label]
        return img


def generate_scene(
    frame_size: tuple[int, int],
    n_frames: int,
    tracks: list[TrackSpec],
    background: str = "flat",
    seed: int = 0,
) -> tuple[list[np.ndarray], GroundTruth]:
    scene = Scene(frame_size, n_frames, tracks, background, seed)
    bg = scene.render_background()
    return [scene.render(t, bg) for t in range(n_frames)], scene.ground_truth()


def _pair(value: str, key: str) -> tuple[float, float]:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 2:
        raise SceneError(f"{key}: expected 'a, b', got {value!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise SceneError(f"{key}: non-numeric value {value!r}") from None


def parse_scene_spec(text: str) -> Scene:
    """Read a ``[scene]`` section and any number of ``[track NAME]`` sections.

    Example::

        [scene]
        width = 640
        height = 480
        frames = 40
        background = noise
        seed = 7

        [track a]
        label = drone
        start = 100, 120
        velocity = 3, 0.5
        size = 12, 10
    """
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SceneError(f"bad scene spec: {exc}") from None
    if "scene" not in cp:
        raise SceneError("scene spec lacks a [scene] section")
    sc = cp["scene"]
    try:
        w, h, n = sc.getint("width"), sc.getint("height"), sc.getint("frames")
        seed = sc.getint("seed", 0)
    except (TypeError, ValueError) as exc:
        raise SceneError(f"[scene]: {exc}") from None
    if w is None or h is None or n is None:
        raise SceneError("[scene] needs width, height and frames")
    tracks = []
    for name in cp.sections():
        if not name.startswith("track"):
            continue
        s = cp[name]
        try:
            tracks.append(
                TrackSpec(
                    start_center=_pair(s["start"], "start"),
                    velocity=_pair(s.get("velocity", "0, 0"), "velocity"),
                    size=_pair(s["size"], "size"),
                    label=s.get("label", "drone"),
                    first_frame=s.getint("first", 0),
                    last_frame=s.getint("last", n - 1),
                )
            )
        except KeyError as exc:
            raise SceneError(f"[{name}] missing key {exc}") from None
        except ValueError as exc:
            raise SceneError(f"[{name}]: {exc}") from None
    return Scene((w, h), n, tracks, sc.get("background", "flat"), seed)


def write_scene(scene: Scene, out_dir: str | Path, video_id: str = "synth") -> Path:
    """Frames as ``<video>_<frame>.png``, ground truth in ``gt/<video>.txt``, and a manifest."""
    from PIL import Image

    from .ingest import ManifestEntry, serialize_gt, serialize_manifest

    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "gt").mkdir(exist_ok=True)
    bg = scene.render_background()
    entries = []
    for t in range(scene.n_frames):
        path = out / "frames" / f"{video_id}_{t:06d}.png"
        Image.fromarray(scene.render(t, bg)).save(path)
        entries.append(ManifestEntry(video_id, t, str(path)))
    gt = scene.ground_truth(video_id)
    (out / "gt" / f"{video_id}.txt").write_text(serialize_gt(gt), encoding="utf-8")
    manifest = out / "manifest.txt"
    manifest.write_text(serialize_manifest(entries, out), encoding="utf-8")
    return manifest
