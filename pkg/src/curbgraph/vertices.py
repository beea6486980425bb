"""Graph vertices from a keypoint probability map.

Short skeleton pieces (isolated keypoints) give one vertex at their
center. Longer pieces (gathered keypoints along a rounded corner) give
their two endpoints as vertices, joined by the skeleton itself.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .raster import RasterError, connected_components, skeletonize
from .tiling import PatchFrame

_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass
class Connector:
    a: int
    b: int
    polyline: np.ndarray  # (n, 2) global points from vertex a to vertex b

    @property
    def length(self) -> float:
        return float(np.hypot(*np.diff(self.polyline, axis=0).T).sum())


@dataclass
class ExtractedVertices:
    vertices: np.ndarray  # (M, 2) global (x, y), sorted by (y, x)
    connectors: list[Connector] = field(default_factory=list)
    isolated: int = 0
    rounded: int = 0
    branch_splits: int = 0

    def __len__(self) -> int:
        return len(self.vertices)

    def to_dict(self) -> dict:
        return {
            "vertices": [[float(x), float(y)] for x, y in self.vertices],
            "connectors": [{"a": c.a, "b": c.b, "polyline": c.polyline.tolist()} for c in self.connectors],
            "diagnostics": {"isolated": self.isolated, "rounded": self.rounded,
                            "branch_splits": self.branch_splits},
        }

    @classmethod
    def from_dict(cls, d: dict) -> ExtractedVertices:
        verts = np.array(d["vertices"], dtype=float).reshape(-1, 2)
        conns = [Connector(int(c["a"]), int(c["b"]), np.array(c["polyline"], dtype=float).reshape(-1, 2))
                 for c in d.get("connectors", [])]
        for c in conns:
            if not (0 <= c.a < len(verts) and 0 <= c.b < len(verts)):
                raise ValueError("connector endpoint out of range")
        diag = d.get("diagnostics", {})
        return cls(verts, conns, int(diag.get("isolated", 0)), int(diag.get("rounded", 0)),
                   int(diag.get("branch_splits", 0)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")), encoding="utf-8")

    @classmethod
    def load(cls, path) -> ExtractedVertices:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"vertex file not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: malformed vertex document: {exc}") from exc


def _pixel_graph(pixels: np.ndarray) -> dict[tuple[int, int], list[tuple[int, int]]]:
    pset = {(int(x), int(y)) for x, y in pixels}
    adj = {}
    for x, y in sorted(pset, key=lambda p: (p[1], p[0])):
        adj[(x, y)] = [(x + dx, y + dy) for dy, dx in _OFFSETS if (x + dx, y + dy) in pset]
    return adj


def _trace(adj, start, goal, allowed) -> list[tuple[int, int]]:
    """Shortest 8-connected pixel path from start to goal within ``allowed``."""
    prev = {start: None}
    q = deque([start])
    while q:
        p = q.popleft()
        if p == goal:
            break
        for nb in adj[p]:
            if nb in allowed and nb not in prev:
                prev[nb] = p
                q.append(nb)
    path, p = [], goal
    while p is not None:
        path.append(p)
        p = prev[p]
    return path[::-1]


def _ykey(p):
    return (p[1], p[0])


def _simple_arcs(adj) -> tuple[list[list[tuple[int, int]]], bool]:
    """Split a skeleton component into simple pixel paths.

    Branch pixels (three or more neighbours) are removed and every
    remaining piece is traced end to end. Returns the paths and whether a
    split happened.
    """
    branch = {p for p, nb in adj.items() if len(nb) >= 3}
    rest = set(adj) - branch
    arcs = []
    seen: set[tuple[int, int]] = set()
    for p in sorted(rest, key=_ykey):
        if p in seen:
            continue
        comp, stack = [], [p]
        seen.add(p)
        while stack:
            c = stack.pop()
            comp.append(c)
            for nb in adj[c]:
                if nb in rest and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        cset = set(comp)
        ends = sorted((c for c in comp if sum(nb in cset for nb in adj[c]) <= 1), key=_ykey)
        if len(ends) >= 2:
            a, b = ends[0], ends[-1]
        else:
            # closed loop: open it at its smallest pixel
            a = min(comp, key=_ykey)
            nbs = sorted((nb for nb in adj[a] if nb in cset), key=_ykey)
            if len(nbs) >= 2:
                arcs.append([a] + _trace(adj, nbs[0], nbs[-1], cset - {a}))
                continue
            b = nbs[0] if nbs else a
        arcs.append(_trace(adj, a, b, cset) if a != b else [a])
    return arcs, bool(branch)


def _trim_to_ridge(path, values: np.ndarray, ridge_fraction: float):
    """Drop skeleton pixels from both ends while the map is below ``ridge_fraction`` of the arc peak.

    Thinning bends the ends of a thick band towards its rim; trimming
    moves the endpoints back onto the ridge of the map. At least two
    pixels always remain.
    """
    if ridge_fraction <= 0 or len(path) <= 2:
        return path
    v = np.array([values[y, x] for x, y in path])
    keep = np.nonzero(v >= ridge_fraction * v.max())[0]
    i, j = int(keep[0]), int(keep[-1])
    if j - i < 1:
        return path
    return path[i:j + 1]


def _extend_along_ridge(path, values: np.ndarray, ridge_fraction: float, max_steps: int = 12,
                        blocked=frozenset()):
    """Grow both ends of a pixel path forward along the ridge of the map.

    Each step moves to the highest-valued unvisited 8-neighbour ahead of
    the current end, as long as it stays above ``ridge_fraction`` of the
    arc peak and is not in ``blocked`` (pixels owned by other arcs).
    Thinning retracts the ends of a band; this walks them back out to
    where the ridge fades.
    """
    if ridge_fraction <= 0 or len(path) < 2:
        return path
    h, w = values.shape
    peak = max(values[y, x] for x, y in path)
    floor = ridge_fraction * peak
    path = list(path)
    seen = set(path) | set(blocked)
    for end in (0, 1):
        if end:
            path.reverse()
        for _ in range(max_steps):
            x, y = path[-1]
            bx, by = path[max(len(path) - 4, 0)]
            dx, dy = x - bx, y - by
            best = None
            for oy, ox in _OFFSETS:
                nx, ny = x + ox, y + oy
                if not (0 <= nx < w and 0 <= ny < h) or (nx, ny) in seen or ox * dx + oy * dy <= 0:
                    continue
                v = values[ny, nx]
                if v >= floor and (best is None or v > best[0]):
                    best = (v, (nx, ny))
            if best is None:
                break
            path.append(best[1])
            seen.add(best[1])
        if end:
            path.reverse()
    return path


def _refine_peak(values: np.ndarray, x: float, y: float, radius: int, floor: float,
                 iters: int = 3) -> tuple[float, float]:
    """Sub-pixel peak position by a few mean-shift steps of the map above ``floor``."""
    if radius <= 0:
        return x, y
    h, w = values.shape
    for _ in range(iters):
        cx, cy = int(round(x)), int(round(y))
        y0, y1 = max(cy - radius, 0), min(cy + radius + 1, h)
        x0, x1 = max(cx - radius, 0), min(cx + radius + 1, w)
        win = np.clip(values[y0:y1, x0:x1] - floor, 0.0, None)
        total = win.sum()
        if total <= 0:
            break
        yy, xx = np.mgrid[y0:y1, x0:x1]
        nx, ny = float((win * xx).sum() / total), float((win * yy).sum() / total)
        if abs(nx - x) < 1e-3 and abs(ny - y) < 1e-3:
            x, y = nx, ny
            break
        x, y = nx, ny
    return x, y


def extract_vertices(keypoint_map: np.ndarray, frame: PatchFrame | None = None,
                     binarize_threshold: float = 0.3, short_skeleton_len: int = 5,
                     ridge_fraction: float = 0.9, refine_radius: int = 3) -> ExtractedVertices:
    """Binarize, thin and split a keypoint map into graph vertices.

    Skeleton components of at most ``short_skeleton_len`` pixels give the
    skeleton pixel nearest their centroid; longer ones give their two end
    pixels plus the connecting skeleton path as a connector. Branching
    skeletons are split at branch pixels first. Arc ends are trimmed back
    onto the ridge of the map and then walked out along it while the map
    stays above ``ridge_fraction`` of the arc peak (0 disables both).
    Isolated vertices are refined to sub-pixel precision by a local
    intensity centroid (``refine_radius``, 0 disables). Coordinates are
    returned in the global frame (local when ``frame`` is None).
    """
    arr = np.asarray(keypoint_map, dtype=float)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise RasterError(f"extract_vertices expects a single-channel map, got {arr.shape}")
    ox, oy = frame.expanded_origin if frame is not None else (0.0, 0.0)
    skel = skeletonize((arr >= binarize_threshold).astype(np.float32))

    points: list[tuple[float, float]] = []
    arcs_px: list[list[tuple[int, int]]] = []
    claimed: set[tuple[int, int]] = set()
    isolated = rounded = splits = 0
    for comp in connected_components(skel, 8):
        if len(comp) <= short_skeleton_len:
            c = comp.mean(axis=0)
            d = np.hypot(comp[:, 0] - c[0], comp[:, 1] - c[1])
            k = int(np.argmin(d))  # comp is sorted by (y, x): ties go to the smallest
            points.append(_refine_peak(arr, float(comp[k, 0]), float(comp[k, 1]),
                                       refine_radius, binarize_threshold))
            isolated += 1
            continue
        arcs, split = _simple_arcs(_pixel_graph(comp))
        splits += int(split)
        trimmed = [_trim_to_ridge(path, arr, ridge_fraction) if len(path) > 1 else path for path in arcs]
        # an arc may not grow into the skeleton of its siblings, so arc ends stay distinct
        owned = {tuple(p) for p in comp.tolist()}
        for k, path in enumerate(trimmed):
            if len(path) == 1:
                points.append(_refine_peak(arr, float(path[0][0]), float(path[0][1]),
                                           refine_radius, binarize_threshold))
                isolated += 1
                continue
            rounded += 1
            blocked = (owned | claimed) - set(arcs[k])
            path = _extend_along_ridge(path, arr, ridge_fraction, blocked=blocked)
            claimed.update(path)
            arcs_px.append(path)
            points.append((float(path[0][0]), float(path[0][1])))
            points.append((float(path[-1][0]), float(path[-1][1])))

    # separate skeleton components sit >= 2 px apart, so sorting is all that is left
    order = sorted(set(points), key=_ykey)
    index = {p: i for i, p in enumerate(order)}
    verts = np.array(order, dtype=float).reshape(-1, 2) + [ox, oy]
    connectors = []
    for path in arcs_px:
        a = index[(float(path[0][0]), float(path[0][1]))]
        b = index[(float(path[-1][0]), float(path[-1][1]))]
        connectors.append(Connector(a, b, np.array(path, dtype=float) + [ox, oy]))
    connectors.sort(key=lambda c: (c.a, c.b))
    return ExtractedVertices(verts, connectors, isolated, rounded, splits)
