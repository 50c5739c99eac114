"""Crop plan for two-scale inference: the full frame plus four overlapping corner tiles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

DEFAULT_FRACTION = 0.55


@dataclass(frozen=True)
class TileWindow:
    name: str  # "full" or "tile0".."tile3"; doubles as the detection source tag
    origin_x: int
    origin_y: int
    width: int
    height: int

    @property
    def kind(self) -> str:
        return "full" if self.name == "full" else f"corner{self.name[-1]}"

    @property
    def index(self) -> int:
        """0 for the full frame, 1..4 for the corner tiles."""
        return 0 if self.name == "full" else int(self.name[-1]) + 1

    @property
    def bounds(self) -> tuple[int, int, int, int]:
        return (self.origin_x, self.origin_y, self.origin_x + self.width, self.origin_y + self.height)


@dataclass(frozen=True)
class TilePlan:
    frame_width: int
    frame_height: int
    fraction: float
    tiles: tuple[TileWindow, ...]

    def __iter__(self) -> Iterator[TileWindow]:
        return iter(self.tiles)

    def __len__(self) -> int:
        return len(self.tiles)

    @property
    def full(self) -> TileWindow:
        return self.tiles[0]

    @property
    def corners(self) -> tuple[TileWindow, ...]:
        return self.tiles[1:]

    def window(self, name: str) -> TileWindow:
        for w in self.tiles:
            if w.name == name:
                return w
        raise KeyError(name)

    def whole_only(self) -> TilePlan:
        """The same plan restricted to the full-frame window."""
        return TilePlan(self.frame_width, self.frame_height, self.fraction, self.tiles[:1])

    def to_text(self) -> str:
        return "".join(f"{w.kind} {w.origin_x} {w.origin_y} {w.width} {w.height}\n" for w in self.tiles)

    @classmethod
    def from_text(cls, text: str) -> TilePlan:
        windows = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ValueError(f"line {lineno}: expected 'kind x y w h', got {line!r}")
            kind = parts[0]
            if kind == "full":
                name = "full"
            elif kind.startswith("corner") and kind[6:] in ("0", "1", "2", "3"):
                name = f"tile{kind[6:]}"
            else:
                raise ValueError(f"line {lineno}: unknown window kind {kind!r}")
            try:
                x, y, w, h = (int(p) for p in parts[1:])
            except ValueError:
                raise ValueError(f"line {lineno}: non-integer geometry in {line!r}") from None
            windows.append(TileWindow(name, x, y, w, h))
        if not windows or windows[0].name != "full":
            raise ValueError("plan must start with the full-frame window")
        full = windows[0]
        frac = windows[1].width / full.width if len(windows) > 1 else 1.0
        return cls(full.width, full.height, frac, tuple(windows))


def _scaled(fraction: float, n: int) -> int:
    # rounding first keeps exact products such as 0.55 * 1920 from ceiling to 1057
    return math.ceil(round(fraction * n, 9))


def plan_tiles(width: int, height: int, fraction: float = DEFAULT_FRACTION) -> TilePlan:
    """Full frame first, then four corner-anchored tiles of ``ceil(fraction * dim)``.

    Corner order is top-left, top-right, bottom-left, bottom-right. For
    ``fraction >= 0.5`` the corners cover the frame; neighbouring tiles
    overlap by ``2 * tile - dim`` pixels.
    """
    if width < 2 or height < 2:
        raise ValueError(f"frame {width}x{height} too small to tile")
    if not 0.5 <= fraction < 1.0:
        raise ValueError(f"fraction {fraction} outside [0.5, 1.0)")
    tw, th = _scaled(fraction, width), _scaled(fraction, height)
    ox, oy = width - tw, height - th
    tiles = (
        TileWindow("full", 0, 0, width, height),
        TileWindow("tile0", 0, 0, tw, th),
        TileWindow("tile1", ox, 0, tw, th),
        TileWindow("tile2", 0, oy, tw, th),
        TileWindow("tile3", ox, oy, tw, th),
    )
    return TilePlan(width, height, fraction, tiles)
