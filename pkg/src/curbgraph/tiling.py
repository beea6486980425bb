"""Tile to patch decomposition, patch expansion and frame transforms."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .geometry import Rect

_NAME_RE = re.compile(r"^tile_(\d+)_(\d+)__patch_(\d+)_(\d+)$")


@dataclass(frozen=True)
class PatchFrame:
    """Geometry of one image patch in global pixel coordinates.

    The core square is the patch proper; the expanded square adds a
    margin on every side so neighbouring patches overlap.
    """

    tile: tuple[int, int]
    patch: tuple[int, int]
    core_origin: tuple[float, float]
    core_size: int = 1000
    expanded_origin: tuple[float, float] = (-50.0, -50.0)
    expanded_size: int = 1100

    @property
    def name(self) -> str:
        return f"tile_{self.tile[0]}_{self.tile[1]}__patch_{self.patch[0]}_{self.patch[1]}"

    @property
    def core(self) -> Rect:
        x, y = self.core_origin
        return Rect(x, y, x + self.core_size, y + self.core_size)

    @property
    def expanded(self) -> Rect:
        x, y = self.expanded_origin
        return Rect(x, y, x + self.expanded_size, y + self.expanded_size)

    @property
    def margin(self) -> float:
        return self.core_origin[0] - self.expanded_origin[0]

    def to_local(self, p):
        return (p[0] - self.expanded_origin[0], p[1] - self.expanded_origin[1])

    def to_global(self, p):
        return (p[0] + self.expanded_origin[0], p[1] + self.expanded_origin[1])

    def shape(self) -> tuple[int, int]:
        return (self.expanded_size, self.expanded_size)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "tile": list(self.tile),
            "patch": list(self.patch),
            "core_origin": list(self.core_origin),
            "core_size": self.core_size,
            "expanded_origin": list(self.expanded_origin),
            "expanded_size": self.expanded_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> PatchFrame:
        return cls(
            tile=tuple(int(v) for v in d["tile"]),
            patch=tuple(int(v) for v in d["patch"]),
            core_origin=tuple(float(v) for v in d["core_origin"]),
            core_size=int(d["core_size"]),
            expanded_origin=tuple(float(v) for v in d["expanded_origin"]),
            expanded_size=int(d["expanded_size"]),
        )


def parse_frame_name(name: str) -> tuple[tuple[int, int], tuple[int, int]]:
    m = _NAME_RE.match(name)
    if not m:
        raise ValueError(f"not a frame name: {name!r}")
    a, b, c, d = (int(g) for g in m.groups())
    return (a, b), (c, d)


def split_tile(tile_index: tuple[int, int], tile_size: int = 5000,
               core_size: int = 1000, margin: int = 50) -> list[PatchFrame]:
    """Frames of one tile in row-major order.

    Expanded frames may reach past the tile (and the city); neighbouring
    tiles or zero fill cover the excess.
    """
    if core_size <= 0 or tile_size <= 0 or tile_size % core_size:
        raise ValueError(f"tile_size {tile_size} is not divisible by core_size {core_size}")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    tr, tc = tile_index
    n = tile_size // core_size
    frames = []
    for r in range(n):
        for c in range(n):
            x = tc * tile_size + c * core_size
            y = tr * tile_size + r * core_size
            frames.append(PatchFrame(
                tile=(tr, tc), patch=(r, c),
                core_origin=(float(x), float(y)), core_size=core_size,
                expanded_origin=(float(x - margin), float(y - margin)),
                expanded_size=core_size + 2 * margin,
            ))
    return frames


def split_city(tiles: tuple[int, int], tile_size: int = 5000,
               core_size: int = 1000, margin: int = 50) -> list[PatchFrame]:
    rows, cols = tiles
    return [f for r in range(rows) for c in range(cols)
            for f in split_tile((r, c), tile_size, core_size, margin)]


def to_local(frame: PatchFrame, p):
    return frame.to_local(p)


def to_global(frame: PatchFrame, p):
    return frame.to_global(p)


def overlap_region(a: PatchFrame, b: PatchFrame) -> Rect | None:
    """Intersection of two expanded rectangles, or None."""
    return a.expanded.intersection(b.expanded)


def edge_neighbors(frame: PatchFrame, frames: list[PatchFrame]) -> list[PatchFrame]:
    """Frames whose cores share an edge with ``frame``'s core."""
    out = []
    c = frame.core
    for f in frames:
        o = f.core
        if o == c:
            continue
        share_x = (o.x0 == c.x1 or o.x1 == c.x0) and o.y0 == c.y0
        share_y = (o.y0 == c.y1 or o.y1 == c.y0) and o.x0 == c.x0
        if share_x or share_y:
            out.append(f)
    return out
