"""Undirected spatial graph, rasterization, shortest paths and snapping."""

from __future__ import annotations

import heapq
import json
import math
from collections.abc import Iterable
from pathlib import Path

import numpy as np

from .geometry import Rect, point_segment_distance


class GraphError(ValueError):
    pass


class BoundaryGraph:
    """Undirected, unweighted graph whose vertices carry global pixel positions.

    Edge lengths are the Euclidean distances between endpoint positions.
    """

    def __init__(self):
        self._pos: dict[int, tuple[float, float]] = {}
        self._adj: dict[int, set[int]] = {}
        self._next_id = 0

    # -- construction ----------------------------------------------------

    def add_vertex(self, vid: int, x: float, y: float) -> int:
        vid = int(vid)
        if vid in self._pos:
            raise GraphError(f"duplicate vertex id {vid}")
        self._pos[vid] = (float(x), float(y))
        self._adj[vid] = set()
        self._next_id = max(self._next_id, vid + 1)
        return vid

    def new_vertex(self, x: float, y: float) -> int:
        return self.add_vertex(self._next_id, x, y)

    def add_edge(self, a: int, b: int) -> None:
        a, b = int(a), int(b)
        if a == b:
            raise GraphError(f"self-loop on vertex {a}")
        if a not in self._pos or b not in self._pos:
            raise GraphError(f"edge ({a}, {b}) references a missing vertex")
        self._adj[a].add(b)
        self._adj[b].add(a)

    @classmethod
    def from_arrays(cls, positions, edges=()) -> BoundaryGraph:
        g = cls()
        for i, (x, y) in enumerate(np.asarray(positions, dtype=float).reshape(-1, 2)):
            g.add_vertex(i, x, y)
        for a, b in edges:
            g.add_edge(a, b)
        return g

    def copy(self) -> BoundaryGraph:
        g = BoundaryGraph()
        g._pos = dict(self._pos)
        g._adj = {k: set(v) for k, v in self._adj.items()}
        g._next_id = self._next_id
        return g

    # -- queries -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self._pos)

    def __contains__(self, vid) -> bool:
        return vid in self._pos

    @property
    def ids(self) -> list[int]:
        return sorted(self._pos)

    def position(self, vid: int) -> tuple[float, float]:
        try:
            return self._pos[vid]
        except KeyError:
            raise GraphError(f"unknown vertex id {vid}") from None

    def neighbors(self, vid: int) -> set[int]:
        return self._adj[vid]

    def degree(self, vid: int) -> int:
        return len(self._adj[vid])

    def edges(self) -> list[tuple[int, int]]:
        return sorted((a, b) for a, nb in self._adj.items() for b in nb if a < b)

    @property
    def num_edges(self) -> int:
        return sum(len(nb) for nb in self._adj.values()) // 2

    def edge_length(self, a: int, b: int) -> float:
        (ax, ay), (bx, by) = self._pos[a], self._pos[b]
        return math.hypot(ax - bx, ay - by)

    def positions(self) -> np.ndarray:
        """``(n, 2)`` positions ordered by ascending id."""
        return np.array([self._pos[i] for i in self.ids], dtype=float).reshape(-1, 2)

    def segments(self) -> np.ndarray:
        """``(e, 4)`` array of edge segments ``ax, ay, bx, by``."""
        rows = [(*self._pos[a], *self._pos[b]) for a, b in self.edges()]
        return np.array(rows, dtype=float).reshape(-1, 4)

    def total_length(self) -> float:
        return sum(self.edge_length(a, b) for a, b in self.edges())

    def components(self) -> list[list[int]]:
        """Connected components as sorted id lists, ordered by smallest id."""
        seen: set[int] = set()
        out = []
        for start in self.ids:
            if start in seen:
                continue
            comp, stack = [], [start]
            seen.add(start)
            while stack:
                v = stack.pop()
                comp.append(v)
                for w in self._adj[v]:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            out.append(sorted(comp))
        return out

    def validate(self) -> None:
        for a, nb in self._adj.items():
            if a in nb:
                raise GraphError(f"self-loop on vertex {a}")
            for b in nb:
                if b not in self._pos or a not in self._adj[b]:
                    raise GraphError(f"inconsistent edge ({a}, {b})")

    # -- derived graphs ---------------------------------------------------

    def translated(self, dx: float, dy: float) -> BoundaryGraph:
        g = self.copy()
        g._pos = {k: (x + dx, y + dy) for k, (x, y) in self._pos.items()}
        return g

    def relabeled(self) -> BoundaryGraph:
        """Same graph with ids reassigned 0..n-1 in (y, x, old id) order."""
        order = sorted(self._pos, key=lambda v: (self._pos[v][1], self._pos[v][0], v))
        remap = {old: new for new, old in enumerate(order)}
        g = BoundaryGraph()
        for old in order:
            g.add_vertex(remap[old], *self._pos[old])
        for a, b in self.edges():
            g.add_edge(remap[a], remap[b])
        return g

    def polylines(self) -> list[tuple[np.ndarray, bool, list[int]]]:
        """Decompose into maximal chains through degree-2 vertices.

        Returns ``(points, closed, ids)`` triples. Chains run between
        vertices of degree != 2; components where every vertex has degree 2
        come back as closed loops starting at their smallest id.
        """
        used: set[tuple[int, int]] = set()
        out = []

        def walk(start, nxt):
            chain = [start, nxt]
            used.add((min(start, nxt), max(start, nxt)))
            prev, cur = start, nxt
            while self.degree(cur) == 2 and cur != start:
                (w,) = [u for u in self._adj[cur] if u != prev] or [prev]
                key = (min(cur, w), max(cur, w))
                if key in used:
                    break
                used.add(key)
                chain.append(w)
                prev, cur = cur, w
            return chain

        for v in self.ids:
            if self.degree(v) == 2:
                continue
            for w in sorted(self._adj[v]):
                if (min(v, w), max(v, w)) not in used:
                    chain = walk(v, w)
                    out.append((self._chain_points(chain), False, chain))
        for v in self.ids:
            for w in sorted(self._adj[v]):
                if (min(v, w), max(v, w)) not in used:
                    chain = walk(v, w)
                    closed = chain[-1] == chain[0]
                    if closed:
                        chain = chain[:-1]
                    out.append((self._chain_points(chain), closed, chain))
        return out

    def _chain_points(self, chain) -> np.ndarray:
        return np.array([self._pos[v] for v in chain], dtype=float)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "vertices": [{"id": v, "x": self._pos[v][0], "y": self._pos[v][1]} for v in self.ids],
            "edges": [[a, b] for a, b in self.edges()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> BoundaryGraph:
        try:
            g = cls()
            for rec in data["vertices"]:
                g.add_vertex(int(rec["id"]), float(rec["x"]), float(rec["y"]))
            for a, b in data["edges"]:
                g.add_edge(int(a), int(b))
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphError(f"malformed graph document: {exc}") from exc
        return g

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> BoundaryGraph:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GraphError(f"graph file is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BoundaryGraph):
            return NotImplemented
        return self._pos == other._pos and self.edges() == other.edges()

    def __repr__(self) -> str:
        return f"BoundaryGraph(vertices={len(self)}, edges={self.num_edges})"


def save_graph(graph: BoundaryGraph, path) -> None:
    Path(path).write_text(graph.to_json(), encoding="utf-8")


def load_graph(path) -> BoundaryGraph:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"graph file not found: {path}")
    try:
        return BoundaryGraph.from_json(path.read_text(encoding="utf-8"))
    except GraphError as exc:
        raise GraphError(f"{path}: {exc}") from exc


def frame_rect(frame) -> Rect:
    """The raster rectangle of a frame-like object (PatchFrame or Rect)."""
    if isinstance(frame, Rect):
        return frame
    return frame.expanded


def raster_shape(frame) -> tuple[int, int]:
    r = frame_rect(frame)
    h, w = int(round(r.height)), int(round(r.width))
    if h <= 0 or w <= 0:
        raise ValueError("frame must have positive area")
    return h, w


def _segment_windows(seg, rect: Rect, h: int, w: int, reach: float):
    """Yield (row slice, col slice, gx, gy) pixel windows around a segment."""
    ax, ay, bx, by = seg
    i0 = max(int(math.floor(min(ax, bx) - reach - rect.x0)), 0)
    i1 = min(int(math.ceil(max(ax, bx) + reach - rect.x0)) + 1, w)
    j0 = max(int(math.floor(min(ay, by) - reach - rect.y0)), 0)
    j1 = min(int(math.ceil(max(ay, by) + reach - rect.y0)) + 1, h)
    if i0 >= i1 or j0 >= j1:
        return None
    gx = rect.x0 + np.arange(i0, i1)[None, :]
    gy = rect.y0 + np.arange(j0, j1)[:, None]
    return slice(j0, j1), slice(i0, i1), gx, gy


def rasterize_graph(graph: BoundaryGraph, frame, thickness: float = 1.0) -> np.ndarray:
    """Binary ``(h, w)`` float32 raster of the graph's edges over ``frame``.

    A pixel is set when its center lies within ``thickness / 2`` of an
    edge segment.
    """
    if thickness < 1:
        raise ValueError("thickness must be >= 1")
    rect = frame_rect(frame)
    h, w = raster_shape(frame)
    out = np.zeros((h, w), dtype=np.float32)
    half = thickness / 2.0
    for seg in graph.segments():
        win = _segment_windows(seg, rect, h, w, half)
        if win is None:
            continue
        rows, cols, gx, gy = win
        d = point_segment_distance(gx, gy, *seg)
        out[rows, cols][d <= half + 1e-9] = 1.0  # basic slicing: a view
    return out


def shortest_path_length(graph: BoundaryGraph, a: int, b: int) -> float | None:
    """Euclidean length of the shortest a-b path, or None if disconnected."""
    graph.position(a)
    graph.position(b)
    if a == b:
        return 0.0
    dist = {a: 0.0}
    heap = [(0.0, a)]
    done: set[int] = set()
    while heap:
        d, v = heapq.heappop(heap)
        if v in done:
            continue
        if v == b:
            return d
        done.add(v)
        for w in graph.neighbors(v):
            nd = d + graph.edge_length(v, w)
            if nd < dist.get(w, math.inf):
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return None


def snap_vertex(graph: BoundaryGraph, p, radius: float) -> int | None:
    """Id of the nearest vertex within ``radius`` of ``p`` (ties: smallest id)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if len(graph) == 0:
        return None
    ids = graph.ids
    pos = graph.positions()
    d = np.hypot(pos[:, 0] - p[0], pos[:, 1] - p[1])
    k = int(np.argmin(d))  # argmin returns the first minimum, i.e. smallest id
    if d[k] > radius:
        return None
    return ids[k]


def clip_graph(graph: BoundaryGraph, rect: Rect) -> BoundaryGraph:
    """Restrict a graph to ``rect`` (closed), cutting edges at its border.

    Vertices are created where edges cross the border; the pieces of a
    polyline that leaves and re-enters the rectangle stay disconnected.
    """
    out = BoundaryGraph()
    inside = {v: rect.contains_closed(*graph.position(v)) for v in graph.ids}
    for v in graph.ids:
        if inside[v]:
            out.add_vertex(v, *graph.position(v))
    nxt = max(graph.ids, default=-1) + 1
    for a, b in graph.edges():
        pa, pb = np.array(graph.position(a)), np.array(graph.position(b))
        t0, t1 = _clip_segment(pa, pb, rect)
        if t0 is None:
            continue
        ends = []
        for t, v in ((t0, a), (t1, b)):
            if (t == 0.0 and v == a) or (t == 1.0 and v == b):
                ends.append(v)
            else:
                q = pa + t * (pb - pa)
                out.add_vertex(nxt, q[0], q[1])
                ends.append(nxt)
                nxt += 1
        if ends[0] != ends[1] and t1 > t0:
            out.add_edge(*ends)
    return out


def _clip_segment(pa, pb, rect: Rect):
    """Liang-Barsky clip of segment pa-pb to a closed rectangle."""
    t0, t1 = 0.0, 1.0
    d = pb - pa
    for p, q in ((-d[0], pa[0] - rect.x0), (d[0], rect.x1 - pa[0]),
                 (-d[1], pa[1] - rect.y0), (d[1], rect.y1 - pa[1])):
        if p == 0:
            if q < 0:
                return None, None
            continue
        r = q / p
        if p < 0:
            t0 = max(t0, r)
        else:
            t1 = min(t1, r)
        if t0 > t1:
            return None, None
    return t0, t1


def merge_graphs(graphs: Iterable[BoundaryGraph]) -> BoundaryGraph:
    """Disjoint union with fresh ids (no vertex identification)."""
    out = BoundaryGraph()
    for g in graphs:
        remap = {v: out.new_vertex(*g.position(v)) for v in g.ids}
        for a, b in g.edges():
            out.add_edge(remap[a], remap[b])
    return out
