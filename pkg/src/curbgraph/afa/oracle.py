"""Geometric adjacency labels from a ground-truth graph."""

from __future__ import annotations

import numpy as np

from ..geometry import project_onto_polyline
from ..graph import BoundaryGraph


def snap_to_polylines(vertices, gt: BoundaryGraph, snap_radius: float):
    """Per vertex: (polyline index, arc parameter) of its nearest gt point, or None.

    Ties between polylines go to the lower polyline index.
    """
    chains = gt.polylines()
    out = []
    for p in np.asarray(vertices, dtype=float).reshape(-1, 2):
        best = None
        for ci, (pts, closed, _) in enumerate(chains):
            loop = np.vstack([pts, pts[:1]]) if closed else pts
            d, s = project_onto_polyline(loop, p)
            if d <= snap_radius and (best is None or d < best[0]):
                best = (d, ci, s)
        out.append(None if best is None else (best[1], best[2]))
    return out, chains


def oracle_adjacency(vertices, gt: BoundaryGraph, snap_radius: float = 5.0) -> np.ndarray:
    """Adjacency implied by the order of vertices along gt polylines.

    Two vertices are adjacent when they snap to the same polyline and no
    third vertex snaps strictly between them along it. On a closed loop
    either way round counts.
    """
    if snap_radius <= 0:
        raise ValueError("snap_radius must be > 0")
    verts = getattr(vertices, "vertices", vertices)
    snaps, chains = snap_to_polylines(verts, gt, snap_radius)
    m = len(snaps)
    adj = np.zeros((m, m), dtype=bool)
    groups: dict[int, list[tuple[float, int]]] = {}
    for i, sn in enumerate(snaps):
        if sn is not None:
            groups.setdefault(sn[0], []).append((sn[1], i))
    for ci, members in groups.items():
        closed = chains[ci][1]
        # bucket equal parameters: members of one bucket never separate others
        members.sort()
        buckets: list[list[int]] = []
        last = None
        for s, i in members:
            if last is None or s != last:
                buckets.append([])
                last = s
            buckets[-1].append(i)
        links = list(zip(buckets, buckets[1:]))
        if closed and len(buckets) > 2:
            links.append((buckets[-1], buckets[0]))
        for b in buckets:
            for i in b:
                for j in b:
                    adj[i, j] = True
        for a, b in links:
            for i in a:
                for j in b:
                    adj[i, j] = adj[j, i] = True
    np.fill_diagonal(adj, False)
    return adj
