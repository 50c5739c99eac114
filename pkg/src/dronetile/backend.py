"""
Detector backends
=================

A real detector runs as a child process: it receives one pre-cropped image
path as its only argument and prints one ``label score x y w h`` line per
detection (window-local pixels, top-left plus size), exiting 0. The mock
backend derives detections from ground truth instead, for tests and
synthetic benchmarks.
"""

from __future__ import annotations

import logging
import math
import os
import shlex
import subprocess
import tempfile
import zlib
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np

from .geometry import LABELS, BoundingBox, Detection, clip, intersection_area
from .tiling import TileWindow

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.0


class BackendError(RuntimeError):
    """The detector failed; ``output`` holds whatever it printed."""

    def __init__(self, message: str, output: str = "", stderr: str = ""):
        super().__init__(message)
        self.output = output
        self.stderr = stderr


def parse_backend_output(text: str, window: TileWindow, frame: int = 0) -> list[Detection]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 6:
            raise BackendError(f"line {lineno}: expected 'label score x y w h', got {line!r}", text)
        label = parts[0]
        if label not in LABELS:
            raise BackendError(f"line {lineno}: unknown label {label!r}", text)
        try:
            score, x, y, w, h = (float(p) for p in parts[1:])
        except ValueError:
            raise BackendError(f"line {lineno}: non-numeric field in {line!r}", text) from None
        if not all(math.isfinite(v) for v in (score, x, y, w, h)):
            raise BackendError(f"line {lineno}: non-finite value in {line!r}", text)
        if not 0.0 <= score <= 1.0:
            raise BackendError(f"line {lineno}: score {score} outside [0, 1]", text)
        if w < 0 or h < 0:
            raise BackendError(f"line {lineno}: negative size in {line!r}", text)
        out.append(Detection(BoundingBox.from_xywh(x, y, w, h), label, score, frame, window.name))
    return out


def detect_via_subprocess(
    executable: str | Sequence[str],
    image_path: str | os.PathLike,
    window: TileWindow,
    frame: int = 0,
    timeout: float = DEFAULT_TIMEOUT,
) -> list[Detection]:
    """Run ``<executable> <image_path>`` and parse its stdout.

    ``executable`` may be a list (or shell-quoted string) when the detector
    needs an interpreter prefix.
    """
    if isinstance(executable, str):
        cmd = shlex.split(executable)
    else:
        cmd = list(executable)
    cmd.append(os.fspath(image_path))
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired as exc:
        out = exc.stdout.decode(errors="replace") if isinstance(exc.stdout, bytes) else (exc.stdout or "")
        raise BackendError(f"detector timed out after {timeout} s", out) from None
    except OSError as exc:
        raise BackendError(f"cannot start detector {cmd[0]!r}: {exc}") from None
    if proc.stderr:
        log.debug("detector stderr for %s: %s", image_path, proc.stderr.rstrip())
    if proc.returncode != 0:
        raise BackendError(f"detector exited with status {proc.returncode}", proc.stdout, proc.stderr)
    return parse_backend_output(proc.stdout, window, frame)


# -- mock -------------------------------------------------------------------

@dataclass(frozen=True)
class MockDetectorConfig:
    miss_prob: float = 0.0
    fp_rate: float = 0.0
    jitter_px: float = 0.0
    score_range: tuple[float, float] = (0.9, 0.9)
    rng_seed: int = 0
    fp_size_range: tuple[float, float] = (8.0, 48.0)
    # scale-sensitivity model: detections whose box, after resizing the
    # window so its longer side is ``input_size``, covers fewer than
    # ``min_area_px`` pixels are lost
    input_size: int | None = None
    min_area_px: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.miss_prob <= 1.0:
            raise ValueError("miss_prob outside [0, 1]")
        if self.fp_rate < 0:
            raise ValueError("fp_rate must be non-negative")
        if self.jitter_px < 0:
            raise ValueError("jitter_px must be non-negative")
        lo, hi = self.score_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"score_range {self.score_range} not within [0, 1]")
        if not 0 < self.fp_size_range[0] <= self.fp_size_range[1]:
            raise ValueError("fp_size_range must be positive and ordered")
        if self.input_size is not None and self.input_size <= 0:
            raise ValueError("input_size must be positive")


def derived_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, *keys])


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def _jitter_edges(lo: float, hi: float, j: float, rng: np.random.Generator) -> tuple[float, float]:
    a = lo + rng.uniform(-j, j) if j else lo
    b = hi + rng.uniform(-j, j) if j else hi
    if b < a:
        # crossed edges meet at a point still within j of both originals
        a = b = min(max((a + b) / 2.0, hi - j), lo + j)
    return a, b


def mock_detect(
    truth: Sequence[BoundingBox | tuple[BoundingBox, str]],
    window: TileWindow,
    cfg: MockDetectorConfig,
    frame: int = 0,
    stream: int = 0,
) -> list[Detection]:
    """Simulated detector output for one window, in window-local coordinates.

    ``truth`` holds frame-coordinate boxes (optionally with labels; drone
    otherwise). Randomness comes from a generator keyed on
    ``(seed, stream, frame, window)``, so any call order gives the same result.
    """
    rng = derived_rng(cfg.rng_seed, stream, frame, window.index)
    wx0, wy0, wx1, wy1 = window.bounds
    win_box = BoundingBox(wx0, wy0, wx1, wy1)
    lo, hi = cfg.score_range
    out: list[Detection] = []

    for item in truth:
        box, label = item if isinstance(item, tuple) else (item, "drone")
        # draws are made for every box so one box's fate never shifts another's
        hit = rng.random() >= cfg.miss_prob
        x1, x2 = _jitter_edges(box.x1, box.x2, cfg.jitter_px, rng)
        y1, y2 = _jitter_edges(box.y1, box.y2, cfg.jitter_px, rng)
        score = rng.uniform(lo, hi) if hi > lo else lo
        if not hit or intersection_area(box, win_box) <= 0:
            continue
        local = clip(BoundingBox(x1 - wx0, y1 - wy0, x2 - wx0, y2 - wy0), window.width, window.height)
        if local.area <= 0:
            continue
        out.append(Detection(local, label, _round_score(score), frame, window.name))

    for _ in range(rng.poisson(cfg.fp_rate) if cfg.fp_rate > 0 else 0):
        w = min(rng.uniform(*cfg.fp_size_range), window.width)
        h = min(rng.uniform(*cfg.fp_size_range), window.height)
        x = rng.uniform(0, window.width - w)
        y = rng.uniform(0, window.height - h)
        score = rng.uniform(lo, hi) if hi > lo else lo
        out.append(Detection(BoundingBox(x, y, x + w, y + h), "drone", _round_score(score), frame, window.name))

    if cfg.input_size is not None and cfg.min_area_px > 0:
        s = cfg.input_size / max(window.width, window.height)
        out = [d for d in out if d.box.area * s * s >= cfg.min_area_px]
    return out


def _round_score(s: float) -> float:
    # the interchange format keeps six decimals; mock scores start there
    return float(f"{s:.6f}")


# -- backend objects used by the pipeline -----------------------------------

class Backend(Protocol):
    def detect(self, video: str, frame: int, image_path: str | None, window: TileWindow) -> list[Detection]:
        ...


class MockBackend:
    """Looks ground truth up per ``(video, frame)``; images are never read."""

    def __init__(self, truth: Mapping[str, Mapping[int, Sequence]], cfg: MockDetectorConfig = MockDetectorConfig()):
        self.truth = truth
        self.cfg = cfg

    def detect(self, video, frame, image_path, window):
        boxes = self.truth.get(video, {}).get(frame, [])
        return mock_detect(boxes, window, self.cfg, frame=frame, stream=stream_key(video))


class SubprocessBackend:
    """Crops each window to a temporary PNG and hands it to the detector executable."""

    def __init__(self, executable: str | Sequence[str], timeout: float = DEFAULT_TIMEOUT):
        self.executable = executable
        self.timeout = timeout

    def detect(self, video, frame, image_path, window):
        from PIL import Image

        if image_path is None:
            raise BackendError(f"{video} frame {frame}: subprocess backend needs an image path")
        try:
            with Image.open(image_path) as im:
                crop = im.convert("RGB").crop(window.bounds)
        except OSError as exc:
            raise BackendError(f"cannot read {image_path}: {exc}") from None
        with tempfile.TemporaryDirectory(prefix="dronetile-") as tmp:
            path = os.path.join(tmp, f"{window.name}.png")
            crop.save(path)
            return detect_via_subprocess(self.executable, path, window, frame, self.timeout)
