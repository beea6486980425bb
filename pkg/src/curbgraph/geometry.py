"""Planar geometry helpers shared by the raster, keypoint and metric code.

Coordinates are continuous pixels in the global (city) frame, x to the
right and y downwards. Pixel ``(i, j)`` of a raster has its center at
integer coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[x0, x1) x [y0, y1)``."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return max(self.width, 0.0) * max(self.height, 0.0)

    def intersection(self, other: Rect) -> Rect | None:
        x0, y0 = max(self.x0, other.x0), max(self.y0, other.y0)
        x1, y1 = min(self.x1, other.x1), min(self.y1, other.y1)
        if x1 <= x0 or y1 <= y0:
            return None
        return Rect(x0, y0, x1, y1)

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1

    def contains_closed(self, x: float, y: float, pad: float = 0.0) -> bool:
        return (self.x0 - pad <= x <= self.x1 + pad
                and self.y0 - pad <= y <= self.y1 + pad)

    def translated(self, dx: float, dy: float) -> Rect:
        return Rect(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)


def point_segment_distance(px, py, ax, ay, bx, by):
    """Euclidean distance from points ``(px, py)`` to segment ``a-b``.

    Works elementwise on numpy arrays; a degenerate segment is a point.
    """
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    dx, dy = bx - ax, by - ay
    len2 = dx * dx + dy * dy
    if len2 == 0.0:
        return np.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / len2
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def polyline_lengths(points: np.ndarray) -> np.ndarray:
    """Cumulative arc length at every vertex of an ``(n, 2)`` polyline."""
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        return np.zeros(0)
    seg = np.hypot(*np.diff(points, axis=0).T)
    return np.concatenate([[0.0], np.cumsum(seg)])


def interpolate_polyline(points: np.ndarray, cum: np.ndarray, s) -> np.ndarray:
    """Points at arc lengths ``s`` (clamped to the polyline)."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, cum[-1])
    x = np.interp(s, cum, points[:, 0])
    y = np.interp(s, cum, points[:, 1])
    return np.stack([x, y], axis=-1)


def resample_polyline(points: np.ndarray, max_spacing: float = 1.0,
                      closed: bool = False) -> tuple[np.ndarray, float]:
    """Resample uniformly in arc length with spacing ``<= max_spacing``.

    Returns the samples and the actual spacing. For closed polylines the
    closing segment is included and the start point is not repeated.
    """
    pts = np.asarray(points, dtype=float)
    if closed and len(pts) > 1 and not np.array_equal(pts[0], pts[-1]):
        pts = np.vstack([pts, pts[:1]])
    cum = polyline_lengths(pts)
    total = cum[-1] if len(cum) else 0.0
    if total == 0.0:
        return pts[:1].copy(), 0.0
    n = max(int(math.ceil(total / max_spacing - 1e-9)), 1)
    spacing = total / n
    if closed:
        s = np.arange(n) * spacing
    else:
        s = np.linspace(0.0, total, n + 1)
    return interpolate_polyline(pts, cum, s), spacing


def sample_every(points: np.ndarray, step: float) -> np.ndarray:
    """Points at arc length 0, step, 2 step, ... along an open polyline, plus its end.

    Unlike ``resample_polyline`` the spacing is exactly ``step`` except for
    the final, shorter gap.
    """
    pts = np.asarray(points, dtype=float)
    cum = polyline_lengths(pts)
    total = cum[-1] if len(cum) else 0.0
    if total == 0.0:
        return pts[:1].copy()
    s = np.arange(0.0, total, step)
    if total - s[-1] < 1e-6:
        s = s[:-1]
    return interpolate_polyline(pts, cum, np.append(s, total))


def smooth_polyline(points: np.ndarray, half_window: int = 1) -> np.ndarray:
    """Moving average with a window shrinking towards the ends; endpoints stay fixed."""
    pts = np.asarray(points, dtype=float)
    out = pts.copy()
    n = len(pts)
    for i in range(1, n - 1):
        k = min(half_window, i, n - 1 - i)
        out[i] = pts[i - k:i + k + 1].mean(axis=0)
    return out


def project_onto_polyline(points: np.ndarray, p) -> tuple[float, float]:
    """Nearest point of a polyline to ``p``: (distance, arc-length parameter).

    Ties between segments resolve to the smallest arc length.
    """
    pts = np.asarray(points, dtype=float)
    px, py = float(p[0]), float(p[1])
    if len(pts) == 1:
        return math.hypot(px - pts[0, 0], py - pts[0, 1]), 0.0
    a = pts[:-1]
    d = pts[1:] - a
    len2 = (d ** 2).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = ((px - a[:, 0]) * d[:, 0] + (py - a[:, 1]) * d[:, 1]) / len2
    t = np.where(len2 > 0, np.clip(t, 0.0, 1.0), 0.0)
    qx = a[:, 0] + t * d[:, 0]
    qy = a[:, 1] + t * d[:, 1]
    dist = np.hypot(px - qx, py - qy)
    k = int(np.argmin(dist))
    cum = polyline_lengths(pts)
    return float(dist[k]), float(cum[k] + t[k] * math.sqrt(len2[k]))


def segment_axis_crossings(a, b, axis: int, value: float) -> float | None:
    """Parameter ``t`` in [0, 1) where segment a-b crosses ``coord[axis] == value``.

    The half-open convention makes a polyline passing exactly through a
    vertex on the line report the crossing once.
    """
    va, vb = a[axis], b[axis]
    if va == vb:
        return None
    t = (value - va) / (vb - va)
    if 0.0 <= t < 1.0:
        return t
    return None
