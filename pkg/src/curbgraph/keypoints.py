"""Keypoint definition from a ground-truth boundary graph.

Corner keypoints sit where the boundary heading turns sharply; a long
bend yields a gathered run of ``corner_rounded`` points instead of one
``corner_isolated`` point. Intersection keypoints are the crossings of
boundaries with the core-patch grid (shared between neighbouring
patches) and with an auxiliary global grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Rect, polyline_lengths, interpolate_polyline, resample_polyline
from .graph import BoundaryGraph
from .raster import render_gaussian_points
from .tiling import PatchFrame

CORNER_ISOLATED = "corner_isolated"
CORNER_ROUNDED = "corner_rounded"
INTERSECT_CORE = "intersect_core_edge"
INTERSECT_NEIGHBOR = "intersect_neighbor_edge"
INTERSECT_AUX = "intersect_aux_line"

# core-grid crossing in a city-wide list, before a frame decides core vs neighbour edge
GRID = "grid"

KINDS = (CORNER_ISOLATED, CORNER_ROUNDED, INTERSECT_CORE, INTERSECT_NEIGHBOR, INTERSECT_AUX)
# Lower rank wins when two keypoints coincide.
_RANK = {k: i for i, k in enumerate(KINDS)}
_RANK[GRID] = _RANK[INTERSECT_CORE]

DEDUP_RADIUS = 0.5
_TURN_EPS = math.radians(0.5)


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    kind: str

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> Keypoint:
        if d["kind"] not in _RANK:
            raise ValueError(f"unknown keypoint kind {d['kind']!r}")
        return cls(float(d["x"]), float(d["y"]), d["kind"])


# ---------------------------------------------------------------------------
# Corners

class _Polyline:
    """Arc-length view of one boundary chain with exact segment headings."""

    def __init__(self, points: np.ndarray, closed: bool):
        pts = np.asarray(points, dtype=float)
        if closed and not np.array_equal(pts[0], pts[-1]):
            pts = np.vstack([pts, pts[:1]])
        # drop zero-length segments
        keep = np.concatenate([[True], np.hypot(*np.diff(pts, axis=0).T) > 0])
        self.points = pts[keep]
        self.closed = closed
        self.cum = polyline_lengths(self.points)
        self.length = float(self.cum[-1]) if len(self.cum) else 0.0
        d = np.diff(self.points, axis=0)
        self.heading = np.arctan2(d[:, 1], d[:, 0])

    def segment_at(self, s):
        s = np.asarray(s, dtype=float)
        if self.closed:
            s = np.mod(s, self.length)
        else:
            s = np.clip(s, 0.0, self.length)
        k = np.searchsorted(self.cum, s, side="right") - 1
        return np.clip(k, 0, len(self.heading) - 1)

    def turn_between(self, s0, s1):
        """Angle in [0, pi] between headings at arc positions s0 and s1."""
        h0 = self.heading[self.segment_at(s0)]
        h1 = self.heading[self.segment_at(s1)]
        return np.abs(np.angle(np.exp(1j * (h1 - h0))))

    def vertex_turns(self) -> np.ndarray:
        """Turning angle at every interior vertex (closed: every vertex)."""
        n = len(self.heading)
        turns = np.zeros(len(self.points))
        for k in range(1, n):
            turns[k] = abs(math.remainder(self.heading[k] - self.heading[k - 1], 2 * math.pi))
        if self.closed and n > 1:
            turns[0] = abs(math.remainder(self.heading[0] - self.heading[-1], 2 * math.pi))
            turns[-1] = 0.0  # duplicate of the start vertex
        return turns

    def point_at(self, s) -> np.ndarray:
        if self.closed:
            s = np.mod(s, self.length)
        return interpolate_polyline(self.points, self.cum, s)


def heading_change(points, closed: bool, s, window: float):
    """Heading change across ``[s - window, s + window]`` on a polyline."""
    pl = _Polyline(points, closed)
    s = np.asarray(s, dtype=float)
    return pl.turn_between(s - window, s + window)


def _runs(mask: np.ndarray, circular: bool) -> list[list[int]]:
    n = len(mask)
    if not mask.any():
        return []
    if circular and mask.all():
        return [list(range(n))]
    idx = np.nonzero(mask)[0]
    runs, cur = [], [int(idx[0])]
    for i in idx[1:]:
        if i == cur[-1] + 1:
            cur.append(int(i))
        else:
            runs.append(cur)
            cur = [int(i)]
    runs.append(cur)
    if circular and len(runs) > 1 and runs[0][0] == 0 and runs[-1][-1] == n - 1:
        runs[0] = runs.pop() + runs[0]
    return runs


def polyline_corners(points, closed: bool, angle_threshold: float = 30.0,
                     arc_window: float = 8.0, gather: float = 6.0) -> list[Keypoint]:
    """Corner keypoints of one polyline (see ``corner_keypoints``)."""
    pl = _Polyline(points, closed)
    if pl.length == 0.0 or len(pl.heading) < 2:
        return []
    n = max(int(math.ceil(pl.length - 1e-9)), 1)
    h = pl.length / n
    s = np.arange(n if closed else n + 1) * h
    change = pl.turn_between(s - arc_window, s + arc_window)
    qualifies = change >= math.radians(angle_threshold) - 1e-12

    turns = pl.vertex_turns()
    bend_s = pl.cum[turns > _TURN_EPS]
    out = []
    for run in _runs(qualifies, circular=closed):
        lo, hi = s[run[0]], s[run[-1]]
        if closed and hi < lo:  # run wraps past the start
            hi += pl.length
        cand = np.concatenate([bend_s, bend_s + pl.length]) if closed else bend_s
        inside = cand[(cand >= lo - 1e-9) & (cand <= hi + 1e-9)]
        extent = float(inside[-1] - inside[0]) if len(inside) else 0.0
        if extent > gather:
            for i in run:
                x, y = pl.point_at(s[i])
                out.append(Keypoint(float(x), float(y), CORNER_ROUNDED))
        else:
            mid = float((inside[0] + inside[-1]) / 2) if len(inside) else (lo + hi) / 2
            x, y = pl.point_at(mid)
            out.append(Keypoint(float(x), float(y), CORNER_ISOLATED))
    return out


def corner_keypoints(graph: BoundaryGraph, angle_threshold: float = 30.0,
                     arc_window: float = 8.0, gather: float = 6.0) -> list[Keypoint]:
    """Corner keypoints of every boundary chain in the graph.

    A point at arc position ``s`` qualifies when the boundary heading at
    ``s - arc_window`` and at ``s + arc_window`` differ by at least
    ``angle_threshold`` degrees. Each run of consecutive qualifying
    samples (1 px apart or closer) is classified by how far its actual
    bending spreads: over more than ``gather`` px of arc it becomes a
    gathered run of ``corner_rounded`` samples, otherwise one
    ``corner_isolated`` point at the middle of the bend.
    """
    if not 0 < angle_threshold < 180:
        raise ValueError("angle_threshold must be in (0, 180)")
    out = []
    for points, closed, _ in graph.polylines():
        out.extend(polyline_corners(points, closed, angle_threshold, arc_window, gather))
    return dedupe_keypoints(out)


# ---------------------------------------------------------------------------
# Intersections

def _crossings(graph: BoundaryGraph, axis: int, values) -> list[tuple[float, float, float]]:
    """Points where edges cross lines ``coord[axis] == v`` for v in values."""
    values = np.asarray(sorted(values), dtype=float)
    out = []
    if len(values) == 0:
        return out
    for ax, ay, bx, by in graph.segments():
        a = (ax, ay)
        b = (bx, by)
        va, vb = a[axis], b[axis]
        if va == vb:
            continue
        lo, hi = min(va, vb), max(va, vb)
        for v in values[(values >= lo) & (values <= hi)]:
            t = (v - va) / (vb - va)
            x = ax + t * (bx - ax)
            y = ay + t * (by - ay)
            if axis == 0:
                x = float(v)
            else:
                y = float(v)
            out.append((x, y, float(v)))
    return out


def _grid_values(lo: float, hi: float, spacing: float) -> list[float]:
    k0 = math.ceil(lo / spacing)
    k1 = math.floor(hi / spacing)
    return [k * spacing for k in range(k0, k1 + 1)]


def grid_crossings(graph: BoundaryGraph, region: Rect, core_size: float,
                   aux_spacing: float | None) -> list[Keypoint]:
    """Crossings with the core grid (kind ``grid``) and aux lines in ``region``.

    Kinds of core-grid crossings are resolved per frame later.
    """
    pts = []
    specs = [(core_size, GRID)]
    if aux_spacing:
        specs.append((aux_spacing, INTERSECT_AUX))
    for spacing, kind in specs:
        for axis, (lo, hi) in ((0, (region.x0, region.x1)), (1, (region.y0, region.y1))):
            vals = _grid_values(lo, hi, spacing)
            if kind == INTERSECT_AUX:
                vals = [v for v in vals if v % core_size != 0]
            for x, y, _ in _crossings(graph, axis, vals):
                if region.contains_closed(x, y):
                    pts.append(Keypoint(x, y, kind))
    return pts


def _resolve_grid_kind(kp: Keypoint, frame: PatchFrame) -> Keypoint:
    if kp.kind != GRID:
        return kp
    c = frame.core
    on_core = ((kp.x in (c.x0, c.x1) and c.y0 <= kp.y <= c.y1)
               or (kp.y in (c.y0, c.y1) and c.x0 <= kp.x <= c.x1))
    return Keypoint(kp.x, kp.y, INTERSECT_CORE if on_core else INTERSECT_NEIGHBOR)


def intersection_keypoints(graph: BoundaryGraph, frame: PatchFrame,
                           aux_spacing: float | None = 256.0) -> list[Keypoint]:
    """Crossings of boundaries with core edges, neighbour core edges and aux lines.

    The lines are global (the core grid at multiples of the core size and
    the aux grid at multiples of ``aux_spacing``), so neighbouring frames
    compute identical points inside their overlap.
    """
    if aux_spacing is not None and aux_spacing <= 0:
        raise ValueError("aux_spacing must be positive or None")
    region = frame.expanded
    pts = grid_crossings(graph, region, frame.core_size, aux_spacing)
    pts = [_resolve_grid_kind(p, frame) for p in pts if region.contains(p.x, p.y)]
    return dedupe_keypoints(pts)


def dedupe_keypoints(keypoints, radius: float = DEDUP_RADIUS) -> list[Keypoint]:
    """Drop keypoints within ``radius`` of a higher-priority one.

    Priority: corners, then core-edge, neighbour-edge and aux crossings;
    ties by position. Output sorted by ``(y, x)``.
    """
    order = sorted(keypoints, key=lambda k: (_RANK[k.kind], k.y, k.x))
    kept: list[Keypoint] = []
    grid: dict[tuple[int, int], list[Keypoint]] = {}
    for kp in order:
        cx, cy = int(math.floor(kp.x)), int(math.floor(kp.y))
        clash = False
        for gx in (cx - 1, cx, cx + 1):
            for gy in (cy - 1, cy, cy + 1):
                for other in grid.get((gx, gy), ()):
                    if math.hypot(other.x - kp.x, other.y - kp.y) <= radius:
                        clash = True
                        break
        if not clash:
            kept.append(kp)
            grid.setdefault((cx, cy), []).append(kp)
    kept.sort(key=lambda k: (k.y, k.x, _RANK[k.kind]))
    return kept


# ---------------------------------------------------------------------------
# City-level convenience and rendering

def clear_around_corners(keypoints, clearance: float) -> list[Keypoint]:
    """Drop intersection keypoints closer than ``clearance`` to any corner keypoint.

    Rendered keypoints nearer than a few sigma merge into one blob, which
    would pull the corner vertex off the corner; the corner itself is
    shared by every frame that sees the crossing, so nothing is lost for
    stitching.
    """
    corners = [k for k in keypoints if k.kind in (CORNER_ISOLATED, CORNER_ROUNDED)]
    if clearance <= 0 or not corners:
        return list(keypoints)
    tree = cKDTree([(k.x, k.y) for k in corners])
    out = []
    for k in keypoints:
        if k.kind in (CORNER_ISOLATED, CORNER_ROUNDED) or not tree.query_ball_point((k.x, k.y), clearance):
            out.append(k)
    return out


def city_keypoints(graph: BoundaryGraph, bounds: Rect, core_size: float,
                   aux_spacing: float | None = 256.0, angle_threshold: float = 30.0,
                   arc_window: float = 8.0, gather: float = 6.0,
                   corner_clearance: float = 0.0) -> list[Keypoint]:
    """All keypoints of a city in one deduplicated global list.

    Core-grid crossings keep the provisional kind ``grid`` until a frame
    is chosen (see ``frame_keypoints``).
    """
    pts = corner_keypoints(graph, angle_threshold, arc_window, gather)
    pts += grid_crossings(graph, bounds, core_size, aux_spacing)
    return clear_around_corners(dedupe_keypoints(pts), corner_clearance)


def frame_keypoints(all_keypoints, frame: PatchFrame, pad: float = 0.0) -> list[Keypoint]:
    """Keypoints of a city list that fall in the frame (optionally padded)."""
    r = frame.expanded
    out = []
    for kp in all_keypoints:
        if r.x0 - pad <= kp.x < r.x1 + pad and r.y0 - pad <= kp.y < r.y1 + pad:
            out.append(_resolve_grid_kind(kp, frame))
    return out


def keypoint_label_map(keypoints, frame: PatchFrame, sigma: float = 3.0) -> np.ndarray:
    """Gaussian keypoint map over the expanded frame, in local pixels."""
    pts = [frame.to_local((k.x, k.y)) for k in keypoints]
    return render_gaussian_points(pts, sigma, frame.shape())


def resample_boundary(graph: BoundaryGraph, spacing: float = 1.0) -> list[np.ndarray]:
    """Every chain of the graph resampled at ``<= spacing``."""
    return [resample_polyline(p, spacing, closed)[0] for p, closed, _ in graph.polylines()]
