"""sRGB to CIELAB (D65) and the CIE76 colour difference."""

from __future__ import annotations

import numpy as np

# linear sRGB -> XYZ, D65 white
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE_D65 = _RGB_TO_XYZ.sum(axis=1)
_EPS = 216 / 24389
_KAPPA = 24389 / 27


def _decode_srgb(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def srgb_to_lab_array(rgb: np.ndarray) -> np.ndarray:
    """Vectorised conversion of ``(..., 3)`` 8-bit sRGB values to Lab."""
    c = np.asarray(rgb, dtype=np.float64) / 255.0
    xyz = _decode_srgb(c) @ _RGB_TO_XYZ.T / _WHITE_D65
    f = np.where(xyz > _EPS, np.cbrt(xyz), (_KAPPA * xyz + 16) / 116)
    L = 116 * f[..., 1] - 16
    a = 500 * (f[..., 0] - f[..., 1])
    b = 200 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def srgb_to_lab(rgb) -> tuple[float, float, float]:
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.shape != (3,) or arr.min() < 0 or arr.max() > 255:
        raise ValueError(f"expected three channel values in [0, 255], got {rgb!r}")
    L, a, b = srgb_to_lab_array(arr)
    return float(L), float(a), float(b)


def delta_e(c1, c2) -> float:
    """CIE76: Euclidean distance in Lab."""
    d = np.asarray(c1, dtype=np.float64) - np.asarray(c2, dtype=np.float64)
    return float(np.sqrt(np.sum(d * d)))
