"""Synthetic block-grid cities and a stand-in for the perception network.

The generator lays out a grid of streets with random spacing and width;
every block contributes one closed boundary loop with optionally rounded
corners (arcs sampled every 4 px), and a few blocks are irregular
quadrilaterals. The simulator turns a ground-truth city into the two
per-patch probability maps a trained network would predict, with
optional jitter, dropout and false positives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import Rect
from .graph import BoundaryGraph, rasterize_graph
from .keypoints import Keypoint, city_keypoints, frame_keypoints, keypoint_label_map
from .tiling import PatchFrame

ARC_STEP = 4.0


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    jitter_sigma: float = 0.0   # px, Gaussian jitter of every keypoint
    fp_rate: float = 0.0        # false-positive keypoints per kilopixel
    dropout: float = 0.0        # probability of dropping each keypoint

    def validate(self) -> None:
        if self.jitter_sigma < 0:
            raise SpecError("jitter_sigma must be >= 0")
        for name in ("fp_rate", "dropout"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SpecError(f"{name} must be in [0, 1], got {v}")

    @property
    def is_zero(self) -> bool:
        return self.jitter_sigma == 0 and self.fp_rate == 0 and self.dropout == 0


@dataclass(frozen=True)
class CitySpec:
    seed: int = 0
    tiles: tuple[int, int] = (1, 1)
    tile_size: int = 5000
    block_spacing: tuple[float, float] = (180.0, 320.0)
    road_width: tuple[float, float] = (24.0, 40.0)
    corner_radius: tuple[float, float] = (10.0, 18.0)
    round_prob: float = 0.5     # chance that each corner of a block is rounded
    irregular_prob: float = 0.15
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    @property
    def width(self) -> int:
        return self.tiles[1] * self.tile_size

    @property
    def height(self) -> int:
        return self.tiles[0] * self.tile_size

    @property
    def bounds(self) -> Rect:
        return Rect(0.0, 0.0, float(self.width), float(self.height))

    def validate(self) -> None:
        if self.tiles[0] < 1 or self.tiles[1] < 1 or self.tile_size <= 0:
            raise SpecError("tiles and tile_size must be positive")
        lo, hi = self.block_spacing
        if not 0 < lo <= hi:
            raise SpecError("block_spacing must satisfy 0 < min <= max")
        if hi > min(self.width, self.height):
            raise SpecError("blocks larger than the city")
        wlo, whi = self.road_width
        if not 0 < wlo <= whi or whi >= lo / 2:
            raise SpecError("road_width must be positive and well below the block spacing")
        rlo, rhi = self.corner_radius
        if not 0 <= rlo <= rhi:
            raise SpecError("corner_radius must satisfy 0 <= min <= max")
        for name in ("round_prob", "irregular_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise SpecError(f"{name} must be in [0, 1]")
        self.noise.validate()


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _cuts(total: float, lo: float, hi: float, rng: np.random.Generator) -> list[float]:
    cuts = [0.0]
    while True:
        remaining = total - cuts[-1]
        if remaining <= hi:
            cuts.append(float(total))
            return cuts
        step = lo if lo == hi else float(rng.uniform(lo, hi))
        if remaining - step < lo:
            step = remaining / 2.0
        cuts.append(cuts[-1] + step)


@dataclass(frozen=True)
class CityLayout:
    xcuts: tuple[float, ...]
    ycuts: tuple[float, ...]
    xroads: tuple[float, ...]   # road width centred on each x cut
    yroads: tuple[float, ...]

    @property
    def block_count(self) -> int:
        return (len(self.xcuts) - 1) * (len(self.ycuts) - 1)

    def cell(self, r: int, c: int) -> Rect:
        return Rect(self.xcuts[c] + self.xroads[c] / 2, self.ycuts[r] + self.yroads[r] / 2,
                    self.xcuts[c + 1] - self.xroads[c + 1] / 2, self.ycuts[r + 1] - self.yroads[r + 1] / 2)


def city_layout(spec: CitySpec) -> CityLayout:
    """Street grid of a city: cut lines and the road width on each."""
    spec.validate()
    rng = _rng(spec.seed, 0)
    lo, hi = spec.block_spacing
    xcuts = _cuts(spec.width, lo, hi, rng)
    ycuts = _cuts(spec.height, lo, hi, rng)
    wlo, whi = spec.road_width
    xroads = [float(rng.uniform(wlo, whi)) for _ in xcuts]
    yroads = [float(rng.uniform(wlo, whi)) for _ in ycuts]
    return CityLayout(tuple(xcuts), tuple(ycuts), tuple(xroads), tuple(yroads))


def _rounded_rect(cell: Rect, radii) -> list[tuple[float, float]]:
    """Clockwise loop (y down) around a rectangle with per-corner arcs.

    Arc samples are every ARC_STEP px of arc length from the start of the
    arc, plus its end.
    """
    x0, y0, x1, y1 = cell.as_tuple()
    # corner centers and start angles: top-left, top-right, bottom-right, bottom-left
    corners = [((x0, y0), math.pi), ((x1, y0), -math.pi / 2),
               ((x1, y1), 0.0), ((x0, y1), math.pi / 2)]
    signs = [(1, 1), (-1, 1), (-1, -1), (1, -1)]
    pts = []
    for ((cx, cy), start), (sx, sy), r in zip(corners, signs, radii):
        if r <= 0:
            pts.append((cx, cy))
            continue
        ox, oy = cx + sx * r, cy + sy * r
        arc = math.pi / 2 * r
        s = np.arange(0.0, arc, ARC_STEP)
        if arc - s[-1] < 1e-6:
            s = s[:-1]
        for a in start + np.append(s, arc) / r:
            pts.append((ox + r * math.cos(a), oy + r * math.sin(a)))
    return pts


def _block_loop(cell: Rect, spec: CitySpec, rng: np.random.Generator) -> list[tuple[float, float]]:
    side = min(cell.width, cell.height)
    if rng.random() < spec.irregular_prob:
        j = min(12.0, side / 4)
        x0, y0, x1, y1 = cell.as_tuple()
        d = rng.uniform(0, j, size=(4, 2))
        return [(x0 + d[0, 0], y0 + d[0, 1]), (x1 - d[1, 0], y0 + d[1, 1]),
                (x1 - d[2, 0], y1 - d[2, 1]), (x0 + d[3, 0], y1 - d[3, 1])]
    rlo, rhi = spec.corner_radius
    radii = rng.uniform(rlo, rhi, size=4)
    rounded = rng.random(4) < spec.round_prob
    radii = np.where(rounded & (radii >= ARC_STEP), np.minimum(radii, side / 2 - 1), 0.0)
    return _rounded_rect(cell, radii)


def generate_city(spec: CitySpec) -> BoundaryGraph:
    """Ground-truth boundary graph: one closed loop per street block.

    Block shapes draw from a generator derived from (seed, tile) for the
    tile holding the block centre, so tiles are independent of each other.
    """
    layout = city_layout(spec)
    by_tile: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for r in range(len(layout.ycuts) - 1):
        for c in range(len(layout.xcuts) - 1):
            cell = layout.cell(r, c)
            cx, cy = (cell.x0 + cell.x1) / 2, (cell.y0 + cell.y1) / 2
            tile = (min(int(cy // spec.tile_size), spec.tiles[0] - 1),
                    min(int(cx // spec.tile_size), spec.tiles[1] - 1))
            by_tile.setdefault(tile, []).append((r, c))
    loops = {}
    for tile in sorted(by_tile):
        rng = _rng(spec.seed, 1, *tile)
        for r, c in by_tile[tile]:
            loops[(r, c)] = _block_loop(layout.cell(r, c), spec, rng)
    g = BoundaryGraph()
    for key in sorted(loops):
        ids = [g.new_vertex(x, y) for x, y in loops[key]]
        for a, b in zip(ids, ids[1:] + ids[:1]):
            g.add_edge(a, b)
    return g


# ---------------------------------------------------------------------------
# Inference simulation

@dataclass(frozen=True)
class KeypointParams:
    sigma: float = 3.0
    angle_threshold: float = 30.0
    arc_window: float = 8.0
    gather: float = 6.0
    aux_spacing: float | None = 256.0
    core_size: int = 1000
    corner_clearance: float = 9.0   # drop crossings this close to a corner (3 sigma)


def all_keypoints(gt: BoundaryGraph, bounds: Rect, params: KeypointParams) -> list[Keypoint]:
    return city_keypoints(gt, bounds, params.core_size, params.aux_spacing,
                          params.angle_threshold, params.arc_window, params.gather,
                          params.corner_clearance)


def frame_seed(seed: int, frame: PatchFrame) -> np.random.Generator:
    return _rng(seed, 2, *frame.tile, *frame.patch)


def simulate_inference(gt: BoundaryGraph, frame: PatchFrame, noise: NoiseSpec = NoiseSpec(),
                       params: KeypointParams = KeypointParams(), seed: int = 0,
                       keypoints: list[Keypoint] | None = None, bounds: Rect | None = None):
    """Keypoint and segmentation maps for one patch, as a network would give.

    ``keypoints`` may carry a precomputed city keypoint list; otherwise it
    is derived from ``gt`` inside ``bounds`` (default: the padded frame).
    With a zero noise spec both maps equal the label renderers exactly.
    """
    pad = 5.0 * params.sigma
    if keypoints is None:
        e = frame.expanded
        region = bounds or Rect(e.x0 - pad, e.y0 - pad, e.x1 + pad, e.y1 + pad)
        keypoints = all_keypoints(gt, region, params)
    kps = frame_keypoints(keypoints, frame, pad=pad)
    rng = frame_seed(seed, frame)
    pts = np.array([[k.x, k.y] for k in kps], dtype=float).reshape(-1, 2)
    if noise.dropout > 0:
        pts = pts[rng.random(len(pts)) >= noise.dropout]
    if noise.jitter_sigma > 0:
        pts = pts + rng.normal(0.0, noise.jitter_sigma, size=pts.shape)
    if noise.fp_rate > 0:
        e = frame.expanded
        n_fp = rng.poisson(noise.fp_rate * e.area / 1000.0)
        fp = np.stack([rng.uniform(e.x0, e.x1, n_fp), rng.uniform(e.y0, e.y1, n_fp)], axis=1)
        pts = np.vstack([pts, fp])
    kp_map = keypoint_label_map([Keypoint(x, y, "corner_isolated") for x, y in pts], frame, params.sigma)
    seg = rasterize_graph(gt, frame, thickness=3)
    if noise.jitter_sigma > 0:
        seg = np.clip(ndimage.gaussian_filter(seg.astype(np.float64), noise.jitter_sigma), 0, 1).astype(np.float32)
    return kp_map, seg


def feature_tensor(keypoint_map: np.ndarray, segmentation: np.ndarray, frame: PatchFrame,
                   seed: int = 0) -> np.ndarray:
    """Six-channel ``(h, w, 6)`` tensor: four stand-in image channels, keypoints, segmentation.

    The image channels are the segmentation map, its inversion and two
    seeded uniform-noise channels.
    """
    rng = _rng(seed, 3, *frame.tile, *frame.patch)
    h, w = segmentation.shape
    noise = rng.random((h, w, 2), dtype=np.float32)
    seg = segmentation.astype(np.float32)
    return np.concatenate([seg[..., None], (1.0 - seg)[..., None], noise,
                           keypoint_map.astype(np.float32)[..., None], seg[..., None]], axis=2)
