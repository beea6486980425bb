"""Deterministic feature descriptor and vertex embedding assembly.

Stands in for a learned convolutional encoder: per-channel statistics and
value histograms over a 4x4 spatial grid, packed into 1024 floats.
"""

from __future__ import annotations

import numpy as np

from ..tiling import PatchFrame

CHANNELS = 6
GRID = 4
BINS = 8
FEATURE_LEN = 1024
EMBED_LEN = 2 * FEATURE_LEN + 2


def _check(tensor: np.ndarray) -> np.ndarray:
    t = np.asarray(tensor, dtype=np.float64)
    if t.ndim != 3 or t.shape[2] != CHANNELS:
        raise ValueError(f"expected an (h, w, {CHANNELS}) feature tensor, got shape {t.shape}")
    return t


def _edges(n: int) -> np.ndarray:
    return (np.arange(GRID + 1) * n) // GRID


def encode_features(tensor: np.ndarray) -> np.ndarray:
    """1024-float descriptor of a 6-channel tensor.

    Layout: 384 statistics (channel, cell, [mean, std, min, max]) followed
    by 768 histogram fractions (channel, cell, bin) over [0, 1], truncated
    to 1024. Empty cells contribute zeros.
    """
    t = _check(tensor)
    h, w, _ = t.shape
    ye, xe = _edges(h), _edges(w)
    stats = np.zeros((CHANNELS, GRID * GRID, 4))
    hist = np.zeros((CHANNELS, GRID * GRID, BINS))
    for r in range(GRID):
        for c in range(GRID):
            cell = t[ye[r]:ye[r + 1], xe[c]:xe[c + 1]].reshape(-1, CHANNELS)
            if len(cell) == 0:
                continue
            k = r * GRID + c
            stats[:, k, 0] = cell.mean(axis=0)
            stats[:, k, 1] = cell.std(axis=0)
            stats[:, k, 2] = cell.min(axis=0)
            stats[:, k, 3] = cell.max(axis=0)
            bins = np.clip((np.clip(cell, 0.0, 1.0) * BINS).astype(np.int64), 0, BINS - 1)
            for ch in range(CHANNELS):
                hist[ch, k] = np.bincount(bins[:, ch], minlength=BINS) / len(cell)
    return np.concatenate([stats.ravel(), hist.ravel()])[:FEATURE_LEN]


def crop_centered(tensor: np.ndarray, cx: int, cy: int, size: int) -> np.ndarray:
    """``size`` x ``size`` crop with its centre at pixel (cx, cy), zero-padded."""
    h, w = tensor.shape[:2]
    half = size // 2
    out = np.zeros((size, size) + tensor.shape[2:], dtype=tensor.dtype)
    y0, x0 = cy - half, cx - half
    sy0, sx0 = max(y0, 0), max(x0, 0)
    sy1, sx1 = min(y0 + size, h), min(x0 + size, w)
    if sy1 > sy0 and sx1 > sx0:
        out[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0] = tensor[sy0:sy1, sx0:sx1]
    return out


def assemble_embeddings(tensor: np.ndarray, vertices: np.ndarray, frame: PatchFrame | None = None,
                        roi: int = 64) -> np.ndarray:
    """``(M, 2050)`` embeddings: shared global feature, local ROI feature, normalized coords.

    ``vertices`` are global (x, y) positions; with ``frame`` None they are
    taken as local to the tensor.
    """
    if roi <= 0 or roi % 2:
        raise ValueError(f"roi must be a positive even size, got {roi}")
    t = _check(tensor)
    verts = np.asarray(vertices, dtype=float).reshape(-1, 2)
    if len(verts) == 0:
        return np.zeros((0, EMBED_LEN))
    if frame is not None:
        local = verts - np.asarray(frame.expanded_origin, dtype=float)
        size = float(frame.expanded_size)
    else:
        local = verts.copy()
        size = float(t.shape[0])
    glob = encode_features(t)
    out = np.empty((len(verts), EMBED_LEN))
    for i, (x, y) in enumerate(local):
        out[i, :FEATURE_LEN] = glob
        out[i, FEATURE_LEN:2 * FEATURE_LEN] = encode_features(crop_centered(t, int(round(x)), int(round(y)), roi))
        out[i, 2 * FEATURE_LEN:] = np.clip([x / size, y / size], 0.0, 1.0)
    return out
