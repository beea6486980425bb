"""Overlap averaging of patch maps and merging of patch graphs."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from .geometry import sample_every, smooth_polyline
from .graph import BoundaryGraph
from .tiling import PatchFrame
from .vertices import ExtractedVertices

CONNECTOR_STEP = 4.0


@dataclass
class PatchResult:
    frame: PatchFrame
    keypoint_map: np.ndarray | None = None
    graph: BoundaryGraph | None = None


def _frame_key(f: PatchFrame):
    return (f.expanded_origin[1], f.expanded_origin[0], f.tile, f.patch)


def _window(a: PatchFrame, b: PatchFrame):
    """Slices of ``a``'s local raster covered by ``b``'s expanded frame, and the matching slices of ``b``."""
    r = a.expanded.intersection(b.expanded)
    if r is None:
        return None
    ax, ay = a.expanded_origin
    bx, by = b.expanded_origin
    x0, y0, x1, y1 = (int(round(v)) for v in r.as_tuple())
    sa = (slice(y0 - int(ay), y1 - int(ay)), slice(x0 - int(ax), x1 - int(ax)))
    sb = (slice(y0 - int(by), y1 - int(by)), slice(x0 - int(bx), x1 - int(bx)))
    return sa, sb


def average_overlaps(results: list[PatchResult]) -> list[PatchResult]:
    """Replace every covered pixel by the mean over all frames covering it.

    The mean is evaluated as ``min + sum(v - min) / k`` with the sum taken in
    a fixed global frame order, so every frame sharing a pixel computes the
    same float32 value, input order does not matter and a second pass
    changes nothing. Results come back in input order.
    """
    for r in results:
        if r.keypoint_map is None or r.keypoint_map.shape[:2] != r.frame.shape():
            got = None if r.keypoint_map is None else r.keypoint_map.shape
            raise ValueError(f"{r.frame.name}: map shape {got} does not match frame {r.frame.shape()}")
    order = sorted(range(len(results)), key=lambda i: _frame_key(results[i].frame))
    out = []
    for r in results:
        base = r.keypoint_map.astype(np.float64)
        mn = base.copy()
        acc = np.zeros_like(base)
        cnt = np.zeros(base.shape, dtype=np.int64)
        windows = []
        for j in order:
            other = results[j]
            w = _window(r.frame, other.frame)
            if w is None:
                continue
            windows.append((w, other.keypoint_map))
            sa, sb = w
            mn[sa] = np.minimum(mn[sa], other.keypoint_map[sb])
        for (sa, sb), m in windows:
            acc[sa] += m[sb].astype(np.float64) - mn[sa]
            cnt[sa] += 1
        avg = (mn + acc / np.maximum(cnt, 1)).astype(np.float32)
        out.append(replace(r, keypoint_map=avg))
    return out


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _merge_once(pos: np.ndarray, edges: set[tuple[int, int]], radius: float):
    """One round of proximity merging. Returns (positions, edges, merged_any)."""
    n = len(pos)
    if n == 0:
        return pos, edges, False
    pairs = cKDTree(pos).query_pairs(radius, output_type="ndarray")
    if len(pairs) == 0:
        return pos, edges, False
    uf = _UnionFind(n)
    for a, b in pairs:
        uf.union(int(a), int(b))
    roots = np.array([uf.find(i) for i in range(n)])
    members: dict[int, list[int]] = {}
    for i, r in enumerate(roots):
        members.setdefault(int(r), []).append(i)
    new_pos = []
    index = np.empty(n, dtype=np.int64)
    for k, (root, idx) in enumerate(sorted(members.items())):
        pts = pos[idx]
        pts = pts[np.lexsort((pts[:, 0], pts[:, 1]))]
        new_pos.append(pts.mean(axis=0))
        index[idx] = k
    new_edges = set()
    for a, b in edges:
        a, b = int(index[a]), int(index[b])
        if a != b:
            new_edges.add((min(a, b), max(a, b)))
    return np.array(new_pos), new_edges, True


def stitch_graphs(results: list[PatchResult], merge_radius: float = 2.0) -> BoundaryGraph:
    """Union of patch graphs with vertices closer than ``merge_radius`` identified.

    Merging repeats until no two vertices are within the radius; merged
    positions are means of their members. The result is relabeled by
    position so it is independent of the patch order.
    """
    if merge_radius <= 0:
        raise ValueError("merge_radius must be > 0")
    pos_list, edges = [], set()
    graphs = sorted((r for r in results if r.graph is not None), key=lambda r: _frame_key(r.frame))
    for r in graphs:
        g = r.graph
        ids = g.ids
        local = {v: len(pos_list) + i for i, v in enumerate(ids)}
        pos_list.extend(g.position(v) for v in ids)
        for a, b in g.edges():
            edges.add((min(local[a], local[b]), max(local[a], local[b])))
    pos = np.array(pos_list, dtype=float).reshape(-1, 2)
    # exact duplicates first, so coincident points do not depend on the radius
    if len(pos):
        uniq, inv = np.unique(pos, axis=0, return_inverse=True)
        inv = inv.ravel()
        edges = {(min(inv[a], inv[b]), max(inv[a], inv[b])) for a, b in edges if inv[a] != inv[b]}
        pos = uniq
    merged = True
    while merged:
        pos, edges, merged = _merge_once(pos, edges, merge_radius)
    g = BoundaryGraph.from_arrays(pos, sorted(edges))
    return g.relabeled()


def patch_graph(vertices: ExtractedVertices, adjacency: np.ndarray, step: float = CONNECTOR_STEP,
                smooth: int = 1) -> BoundaryGraph:
    """Per-patch graph in global coordinates from vertices, adjacency and connectors.

    Each connector is lightly smoothed (moving average of ``2 * smooth + 1``
    pixels, removing the staircase of the pixel path), becomes a vertex
    chain sampled every ``step`` px of arc length and replaces any direct
    edge between its two endpoints.
    """
    adj = np.asarray(adjacency, dtype=bool)
    m = len(vertices.vertices)
    if adj.shape != (m, m):
        raise ValueError(f"adjacency shape {adj.shape} does not match {m} vertices")
    g = BoundaryGraph()
    for i, (x, y) in enumerate(vertices.vertices):
        g.add_vertex(i, float(x), float(y))
    linked = set()
    for c in vertices.connectors:
        samples = sample_every(smooth_polyline(c.polyline, smooth), step)
        chain = [c.a] + [g.new_vertex(float(x), float(y)) for x, y in samples[1:-1]] + [c.b]
        for a, b in zip(chain, chain[1:]):
            if a != b:
                g.add_edge(a, b)
        linked.add((min(c.a, c.b), max(c.a, c.b)))
    ii, jj = np.nonzero(np.triu(adj, 1))
    for i, j in zip(ii.tolist(), jj.tolist()):
        if (i, j) not in linked:
            g.add_edge(i, j)
    return g
