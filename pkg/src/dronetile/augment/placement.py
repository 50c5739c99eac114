"""Paste transformed patches into an image without touching existing objects."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from PIL import Image

from ..geometry import BoundingBox, intersection_area
from .color import delta_e, srgb_to_lab_array
from .patches import EmptyPatchError, PatchAsset, TransformConfig, opaque_bounds, transform_patch


@dataclass(frozen=True)
class AugmentConfig:
    scale_range: tuple[float, float] = (0.02, 0.15)  # pasted width / image width
    max_instances: int = 3
    delta_e_max: float = 60.0
    max_placement_attempts: int = 50
    rng_seed: int = 0
    transforms: TransformConfig = field(default_factory=TransformConfig)

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= hi <= 1:
            raise ValueError(f"scale_range {self.scale_range} must satisfy 0 < min <= max <= 1")
        if self.max_instances < 0:
            raise ValueError("max_instances must be non-negative")
        if self.max_placement_attempts < 1:
            raise ValueError("max_placement_attempts must be at least 1")
        if self.delta_e_max < 0:
            raise ValueError("delta_e_max must be non-negative")


@dataclass(frozen=True)
class Placement:
    box: BoundingBox
    label: str
    asset_id: str
    delta_e: float
    patch_lab: tuple[float, float, float]
    region_lab: tuple[float, float, float]
    attempts: int


def patch_mean_lab(rgba: np.ndarray) -> np.ndarray:
    """Alpha-weighted mean Lab colour of a patch."""
    lab = srgb_to_lab_array(rgba[..., :3])
    w = rgba[..., 3].astype(np.float64)
    return (lab * w[..., None]).sum(axis=(0, 1)) / w.sum()


def region_mean_lab(rgb: np.ndarray) -> np.ndarray:
    return srgb_to_lab_array(rgb).reshape(-1, 3).mean(axis=0)


def resize_patch(p: PatchAsset, width: int) -> np.ndarray | None:
    """Bilinear resize to ``width`` (aspect kept), cropped to the opaque support."""
    height = max(1, round(width * p.height / p.width))
    if (width, height) == (p.width, p.height):
        return p.pixels
    im = Image.fromarray(p.pixels, "RGBA").resize((width, height), Image.BILINEAR)
    px = np.asarray(im)
    b = opaque_bounds(px[..., 3])
    if b is None:
        return None
    x1, y1, x2, y2 = b
    return px[y1:y2, x1:x2]


def composite(image: np.ndarray, rgba: np.ndarray, x: int, y: int) -> None:
    """Source-over blend of ``rgba`` into ``image`` at ``(x, y)``, in place."""
    h, w = rgba.shape[:2]
    dst = image[y : y + h, x : x + w].astype(np.float64)
    a = rgba[..., 3:4].astype(np.float64) / 255.0
    out = rgba[..., :3].astype(np.float64) * a + dst * (1.0 - a)
    image[y : y + h, x : x + w] = np.clip(np.rint(out), 0, 255).astype(np.uint8)


def place_instances(
    image: np.ndarray,
    existing_boxes: Sequence[tuple[BoundingBox, str]],
    assets: Sequence[PatchAsset],
    cfg: AugmentConfig,
    rng: np.random.Generator,
    stats: Counter | None = None,
) -> tuple[np.ndarray, list[Placement]]:
    """Paste up to ``cfg.max_instances`` patches into a copy of ``image``.

    A position is accepted only when the pasted box has zero intersection
    with every existing and previously pasted box and the patch colour is
    within ``cfg.delta_e_max`` (CIE76) of the destination region's mean.
    ``stats`` collects outcome counts: ``placed``, ``skipped`` and the
    rejection reasons ``overlap``, ``delta_e``, ``too_large``, ``empty_patch``.
    """
    if not assets:
        raise ValueError("asset list is empty")
    if image.ndim != 3 or image.shape[2] != 3 or image.size == 0:
        raise ValueError(f"expected a non-empty (h, w, 3) image, got shape {image.shape}")
    stats = Counter() if stats is None else stats
    out = np.array(image, dtype=np.uint8, copy=True)
    img_h, img_w = out.shape[:2]
    occupied = [b for b, _ in existing_boxes]
    placed: list[Placement] = []

    for _ in range(cfg.max_instances):
        asset = assets[int(rng.integers(len(assets)))]
        try:
            patch = transform_patch(asset, cfg.transforms, rng)
        except EmptyPatchError:
            stats["empty_patch"] += 1
            stats["skipped"] += 1
            continue
        scale = float(rng.uniform(*cfg.scale_range))
        target_w = max(1, round(scale * img_w))
        px = resize_patch(patch, target_w)
        if px is None:
            stats["empty_patch"] += 1
            stats["skipped"] += 1
            continue
        ph, pw = px.shape[:2]
        if pw > img_w or ph > img_h:
            stats["too_large"] += 1
            stats["skipped"] += 1
            continue
        lab_patch = patch_mean_lab(px)

        accepted = None
        for attempt in range(1, cfg.max_placement_attempts + 1):
            x = int(rng.integers(0, img_w - pw + 1))
            y = int(rng.integers(0, img_h - ph + 1))
            box = BoundingBox(x, y, x + pw, y + ph)
            if any(intersection_area(box, b) > 0 for b in occupied):
                stats["overlap"] += 1
                continue
            lab_region = region_mean_lab(out[y : y + ph, x : x + pw])
            de = delta_e(lab_patch, lab_region)
            if de > cfg.delta_e_max:
                stats["delta_e"] += 1
                continue
            accepted = Placement(
                box, asset.label, asset.id, de, tuple(map(float, lab_patch)), tuple(map(float, lab_region)), attempt
            )
            composite(out, px, x, y)
            break

        if accepted is None:
            stats["skipped"] += 1
        else:
            stats["placed"] += 1
            occupied.append(accepted.box)
            placed.append(accepted)
    return out, placed
