"""Batch copy-paste augmentation over an image/label directory pair."""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from ..ingest import NormalizedLabel, ParseError, parse_normalized_records, serialize_normalized_records
from .patches import PatchAsset, load_patch_library
from .placement import AugmentConfig, place_instances

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp")


@dataclass
class AugmentReport:
    images: int = 0
    augmented: int = 0
    placements: int = 0
    skips: int = 0
    reasons: Counter = field(default_factory=Counter)
    errors: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "images": self.images,
            "augmented": self.augmented,
            "placements": self.placements,
            "skips": self.skips,
            "reasons": dict(sorted(self.reasons.items())),
            "errors": [{"file": f, "error": e} for f, e in self.errors],
        }


def image_seed(seed: int, rel_path: str) -> int:
    """Per-image seed, independent of processing order."""
    digest = hashlib.blake2b(rel_path.encode("utf-8"), digest_size=8).digest()
    return (seed & 0xFFFFFFFFFFFFFFFF) ^ int.from_bytes(digest, "little")


def augment_image_file(
    image_path: Path,
    label_path: Path,
    out_image: Path,
    out_label: Path,
    assets: Sequence[PatchAsset],
    cfg: AugmentConfig,
    seed: int,
    report: AugmentReport,
) -> None:
    with Image.open(image_path) as im:
        rgb = np.asarray(im.convert("RGB"))
    h, w = rgb.shape[:2]
    records = parse_normalized_records(label_path.read_text(encoding="utf-8")) if label_path.exists() else []
    existing = [(r.label, r.to_box(w, h)) for r in records]

    stats: Counter = Counter()
    rng = np.random.default_rng(seed)
    augmented, placed = place_instances(rgb, [(b, lab) for lab, b in existing], assets, cfg, rng, stats)

    out_image.parent.mkdir(parents=True, exist_ok=True)
    out_label.parent.mkdir(parents=True, exist_ok=True)
    if placed:
        Image.fromarray(augmented).save(out_image)
        report.augmented += 1
    else:
        shutil.copyfile(image_path, out_image)
    records = list(records) + [NormalizedLabel.from_box(p.label, p.box, w, h) for p in placed]
    out_label.write_text(serialize_normalized_records(records), encoding="utf-8")

    report.placements += stats["placed"]
    report.skips += stats["skipped"]
    for k, v in stats.items():
        if k not in ("placed", "skipped"):
            report.reasons[k] += v


def augment_dataset(
    images_dir: str | Path,
    labels_dir: str | Path,
    patches: str | Path | Sequence[PatchAsset],
    out_dir: str | Path,
    cfg: AugmentConfig = AugmentConfig(),
) -> AugmentReport:
    """Augment every image under ``images_dir``; labels are ``<stem>.txt`` in ``labels_dir``.

    Writes ``out/images``, ``out/labels`` (original records followed by the
    pasted ones) and ``out/report.json``. Unreadable images and malformed
    label files are recorded in the report and skipped.
    """
    images_dir, labels_dir, out_dir = Path(images_dir), Path(labels_dir), Path(out_dir)
    assets = load_patch_library(patches) if isinstance(patches, (str, Path)) else list(patches)
    if not assets:
        raise ValueError("patch library is empty")

    report = AugmentReport()
    files = sorted(p for p in images_dir.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    for path in files:
        rel = path.relative_to(images_dir)
        report.images += 1
        try:
            augment_image_file(
                path,
                (labels_dir / rel).with_suffix(".txt"),
                out_dir / "images" / rel,
                (out_dir / "labels" / rel).with_suffix(".txt"),
                assets,
                cfg,
                image_seed(cfg.rng_seed, rel.as_posix()),
                report,
            )
        except (OSError, ParseError, ValueError) as exc:
            log.warning("skipping %s: %s", path, exc)
            report.errors.append((rel.as_posix(), str(exc)))

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return report
