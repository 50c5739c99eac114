"""Transparent-background object cutouts and their photometric transforms."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from ..geometry import LABELS

PATCH_NAME = re.compile(r"^(?P<label>[a-z]+)_(?P<id>.+)$")
IMAGE_SUFFIXES = (".png", ".webp", ".tif", ".tiff")


class EmptyPatchError(ValueError):
    """A patch has no opaque pixel left."""


def opaque_bounds(alpha: np.ndarray) -> tuple[int, int, int, int] | None:
    """Exclusive ``(x1, y1, x2, y2)`` of the pixels with alpha > 0."""
    ys = np.flatnonzero(alpha.any(axis=1))
    xs = np.flatnonzero(alpha.any(axis=0))
    if ys.size == 0:
        return None
    return int(xs[0]), int(ys[0]), int(xs[-1]) + 1, int(ys[-1]) + 1


def tighten(pixels: np.ndarray) -> np.ndarray:
    b = opaque_bounds(pixels[..., 3])
    if b is None:
        raise EmptyPatchError("patch is fully transparent")
    x1, y1, x2, y2 = b
    return pixels[y1:y2, x1:x2]


@dataclass(frozen=True, eq=False)
class PatchAsset:
    pixels: np.ndarray  # (h, w, 4) uint8 RGBA
    label: str
    id: str = ""

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 4 or px.dtype != np.uint8:
            raise ValueError(f"patch {self.id!r}: expected (h, w, 4) uint8 RGBA, got {px.shape} {px.dtype}")
        if self.label not in LABELS:
            raise ValueError(f"patch {self.id!r}: unknown label {self.label!r}")
        b = opaque_bounds(px[..., 3])
        if b is None:
            raise EmptyPatchError(f"patch {self.id!r} is fully transparent")
        if b != (0, 0, px.shape[1], px.shape[0]):
            raise ValueError(f"patch {self.id!r} is not tight around its opaque pixels")

    @classmethod
    def from_rgba(cls, pixels: np.ndarray, label: str, id: str = "") -> PatchAsset:
        """Build a patch from any RGBA raster, cropping away transparent margins."""
        return cls(np.ascontiguousarray(tighten(np.asarray(pixels, dtype=np.uint8))), label, id)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def same_pixels(self, other: PatchAsset) -> bool:
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))


def load_patch_library(path: str | Path) -> list[PatchAsset]:
    """RGBA files named ``<label>_<id>.<ext>``; files with other names are ignored."""
    from PIL import Image

    assets = []
    for p in sorted(Path(path).iterdir()):
        if p.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        m = PATCH_NAME.match(p.stem)
        if not m or m["label"] not in LABELS:
            continue
        with Image.open(p) as im:
            rgba = np.asarray(im.convert("RGBA"))
        assets.append(PatchAsset.from_rgba(rgba, m["label"], m["id"]))
    return assets


@dataclass(frozen=True)
class TransformConfig:
    """Photometric jitter applied to a patch before pasting.

    Each range is sampled uniformly per patch. Brightness is an additive
    offset on [0, 1] intensities, contrast a multiplier around 0.5, gamma
    an exponent.
    """

    blur: bool = True
    blur_sigma: tuple[float, float] = (0.0, 0.8)
    dropout: bool = True
    dropout_prob: tuple[float, float] = (0.0, 0.03)
    noise: bool = True
    noise_sigma: tuple[float, float] = (0.0, 6.0)
    color: bool = True
    brightness: tuple[float, float] = (-0.1, 0.1)
    contrast: tuple[float, float] = (0.85, 1.15)
    gamma: tuple[float, float] = (0.8, 1.25)

    @classmethod
    def disabled(cls) -> TransformConfig:
        return cls(blur=False, dropout=False, noise=False, color=False)


def _uniform(rng: np.random.Generator, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    return float(lo) if hi <= lo else float(rng.uniform(lo, hi))


def transform_patch(p: PatchAsset, cfg: TransformConfig, rng: np.random.Generator) -> PatchAsset:
    """Colour jitter, noise, blur and pixel dropout, in that order.

    Blur is applied to alpha as well, but pixels that were fully
    transparent stay so; dropped pixels become transparent. The result is
    re-cropped to its opaque support and raises :class:`EmptyPatchError`
    when nothing opaque survives.
    """
    if not (cfg.blur or cfg.dropout or cfg.noise or cfg.color):
        return p
    rgb = p.pixels[..., :3].astype(np.float64)
    alpha = p.pixels[..., 3].astype(np.float64)
    transparent = alpha == 0

    if cfg.color:
        brightness = _uniform(rng, cfg.brightness)
        contrast = _uniform(rng, cfg.contrast)
        gamma = _uniform(rng, cfg.gamma)
        v = (rgb / 255.0) ** gamma
        v = (v - 0.5) * contrast + 0.5 + brightness
        rgb = np.clip(v, 0.0, 1.0) * 255.0

    if cfg.noise:
        sigma = _uniform(rng, cfg.noise_sigma)
        if sigma > 0:
            rgb = np.clip(rgb + rng.normal(0.0, sigma, size=rgb.shape), 0.0, 255.0)

    if cfg.blur:
        sigma = _uniform(rng, cfg.blur_sigma)
        if sigma > 0:
            rgb = np.stack([gaussian_filter(rgb[..., c], sigma, mode="nearest") for c in range(3)], axis=-1)
            alpha = gaussian_filter(alpha, sigma, mode="constant")
            alpha[transparent] = 0.0

    if cfg.dropout:
        prob = _uniform(rng, cfg.dropout_prob)
        if prob > 0:
            alpha[rng.random(alpha.shape) < prob] = 0.0

    out = np.concatenate([np.rint(rgb), np.rint(alpha)[..., None]], axis=-1)
    out = np.clip(out, 0, 255).astype(np.uint8)
    return PatchAsset.from_rgba(out, p.label, p.id)
