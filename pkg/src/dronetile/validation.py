"""Argument checks shared by the estimators and the command line."""

from __future__ import annotations

import numbers

import numpy as np

from .geometry import LABELS, BoundingBox


def check_unit_interval(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not 0.0 <= float(value) <= 1.0:
        raise ValueError(f"{name} must be a real number in [0, 1], got {value!r}")
    return float(value)


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_fraction(value) -> float:
    if not isinstance(value, numbers.Real) or not 0.5 <= float(value) < 1.0:
        raise ValueError(f"fraction must lie in [0.5, 1.0), got {value!r}")
    return float(value)


def check_labels(labels) -> frozenset[str]:
    out = frozenset([labels] if isinstance(labels, str) else labels)
    unknown = out - set(LABELS)
    if unknown:
        raise ValueError(f"unknown labels {sorted(unknown)}; expected a subset of {LABELS}")
    return out


def check_image(image) -> np.ndarray:
    """A non-empty ``(h, w, 3)`` uint8 array."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"expected an (h, w, 3) image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {arr.dtype}")
    return arr


def check_boxes(boxes) -> list[BoundingBox]:
    """Accept ``BoundingBox`` objects or an ``(n, 4)`` array of ``x1, y1, x2, y2``."""
    if isinstance(boxes, np.ndarray):
        arr = np.asarray(boxes, dtype=np.float64)
        if arr.size == 0:
            return []
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise ValueError(f"expected an (n, 4) box array, got shape {arr.shape}")
        return [BoundingBox(*map(float, row)) for row in arr]
    out = []
    for b in boxes:
        out.append(b if isinstance(b, BoundingBox) else BoundingBox(*map(float, b)))
    return out


def as_generator(seed) -> np.random.Generator:
    """``None``, an int, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, numbers.Integral):
        return np.random.default_rng(None if seed is None else int(seed) & 0xFFFFFFFFFFFFFFFF)
    raise ValueError(f"{seed!r} cannot seed a random generator")
