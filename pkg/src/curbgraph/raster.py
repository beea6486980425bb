"""Raster primitives: thinning, components, peaks, Gaussian rendering,
orientation maps, and the CSBT tensor container.

Rasters are plain numpy arrays, ``(h, w)`` for one channel and
``(h, w, c)`` otherwise, with values in [0, 1].
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np
from scipy import ndimage

from .geometry import point_segment_distance
from .graph import BoundaryGraph, _segment_windows, frame_rect, raster_shape

CSBT_MAGIC = b"CSBT"

# Neighbor offsets (dy, dx) in the order N, NE, E, SE, S, SW, W, NW.
_RING = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


class RasterError(ValueError):
    pass


def _single_channel(map_: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(map_)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise RasterError(f"{what} expects a single-channel raster, got shape {arr.shape}")
    return arr


def _binary(map_: np.ndarray, what: str) -> np.ndarray:
    arr = _single_channel(map_, what)
    if not np.all((arr == 0) | (arr == 1)):
        raise RasterError(f"{what} expects a binary raster")
    return arr.astype(bool)


# ---------------------------------------------------------------------------
# Thinning

def _build_simple_lut() -> np.ndarray:
    """Lookup table over 8-neighborhood codes: is the center a simple point?

    Simple means removing the center changes neither the number of
    8-connected foreground components nor 4-connected background
    components in the 3x3 window.
    """
    lut = np.zeros(256, dtype=bool)
    for code in range(256):
        bits = [(code >> k) & 1 for k in range(8)]
        fg = [k for k in range(8) if bits[k]]
        if not fg:
            continue
        # 8-components of the foreground ring: consecutive ring positions are
        # 8-adjacent; an edge neighbor (even k) is also adjacent to k +- 2.
        parent = list(range(8))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for k in fg:
            for j in ((k + 1) % 8, (k + 2) % 8 if k % 2 == 0 else None):
                if j is not None and bits[j]:
                    parent[find(k)] = find(j)
        n_fg = len({find(k) for k in fg})
        # Background 4-components touching the center: consecutive ring
        # positions are 4-adjacent (edge/corner pairs), so components are
        # circular runs of background; count the runs holding an edge pixel.
        if all(bits[k] for k in (0, 2, 4, 6)):
            continue
        groups = 0
        for k in range(8):
            if bits[k] or not bits[(k - 1) % 8]:
                continue
            run, j = [], k
            while not bits[j] and len(run) < 8:
                run.append(j)
                j = (j + 1) % 8
            groups += any(r % 2 == 0 for r in run)
        lut[code] = n_fg == 1 and groups == 1
    return lut


_SIMPLE = _build_simple_lut()


def _code_at(img: np.ndarray, y: int, x: int) -> int:
    code = 0
    for k, (dy, dx) in enumerate(_RING):
        if img[y + dy, x + dx]:
            code |= 1 << k
    return code


def skeletonize(map_: np.ndarray) -> np.ndarray:
    """Thin a binary raster to a one-pixel-wide, topology-preserving skeleton.

    Distance-ordered homotopic thinning: foreground pixels are visited in
    increasing order of their distance to the background (ties in raster
    order) and deleted one at a time while they are simple points, that
    is while removal keeps the 8-connected components and the holes.
    End pixels survive only where the distance map peaks, so a round blob
    shrinks to its centre while a line keeps its ends. Passes repeat until
    nothing changes, hence a second application is a no-op.
    """
    fg = _binary(map_, "skeletonize")
    out = np.zeros(fg.shape, dtype=np.float32)
    if not fg.any():
        return out
    ys, xs = np.nonzero(fg)
    y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
    img = np.zeros((y1 - y0 + 2, x1 - x0 + 2), dtype=bool)
    img[1:-1, 1:-1] = fg[y0:y1, x0:x1]
    depth = ndimage.distance_transform_edt(img)
    anchor = depth >= ndimage.maximum_filter(depth, size=3)

    changed = True
    while changed:
        changed = False
        py, px = np.nonzero(img)
        for k in np.lexsort((px, py, depth[py, px])):
            y, x = py[k], px[k]
            c = _code_at(img, y, x)
            n = bin(c).count("1")
            if _SIMPLE[c] and (n >= 2 or (n == 1 and not anchor[y, x])):
                img[y, x] = False
                changed = True
    out[y0:y1, x0:x1] = img[1:-1, 1:-1]
    return out


# ---------------------------------------------------------------------------
# Components and peaks

def connected_components(map_: np.ndarray, connectivity: int = 8) -> list[np.ndarray]:
    """Foreground components as ``(n, 2)`` int arrays of ``(x, y)``.

    Pixels inside a component are sorted by ``(y, x)``; components are
    ordered by their smallest ``(y, x)`` member.
    """
    fg = _binary(map_, "connected_components")
    if connectivity not in (4, 8):
        raise RasterError("connectivity must be 4 or 8")
    structure = ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)
    labels, n = ndimage.label(fg, structure=structure)
    if n == 0:
        return []
    ys, xs = np.nonzero(labels)  # row-major: already sorted by (y, x)
    lab = labels[ys, xs]
    order = np.argsort(lab, kind="stable")
    bounds = np.searchsorted(lab[order], np.arange(1, n + 2))
    comps = []
    for k in range(n):
        idx = order[bounds[k]:bounds[k + 1]]
        comps.append(np.stack([xs[idx], ys[idx]], axis=1))
    comps.sort(key=lambda c: (c[0, 1], c[0, 0]))
    return comps


def local_peaks(map_: np.ndarray, threshold: float = 0.3, nms_radius: int = 5) -> list[tuple[int, int]]:
    """Greedy non-maximum suppression with a Chebyshev window.

    Candidates are pixels ``>= threshold`` that equal the maximum of their
    ``(2r+1)^2`` window; they are accepted in descending value order (ties
    by ``(y, x)``) unless an accepted peak lies within ``nms_radius``.
    Returns ``(x, y)`` pixel coordinates in acceptance order.
    """
    arr = _single_channel(map_, "local_peaks").astype(float)
    if not 0.0 <= threshold <= 1.0:
        raise RasterError("threshold must be in [0, 1]")
    if nms_radius < 1:
        raise RasterError("nms_radius must be >= 1")
    size = 2 * nms_radius + 1
    mx = ndimage.maximum_filter(arr, size=size, mode="constant", cval=-np.inf)
    ys, xs = np.nonzero((arr >= threshold) & (arr == mx))
    order = sorted(range(len(ys)), key=lambda k: (-arr[ys[k], xs[k]], ys[k], xs[k]))
    taken: list[tuple[int, int]] = []
    for k in order:
        x, y = int(xs[k]), int(ys[k])
        if all(max(abs(x - tx), abs(y - ty)) > nms_radius for tx, ty in taken):
            taken.append((x, y))
    return taken


# ---------------------------------------------------------------------------
# Rendering

def render_gaussian_points(points, sigma: float, shape: tuple[int, int],
                           truncate: float = 5.0) -> np.ndarray:
    """Max-composited isotropic Gaussians ``exp(-d^2 / 2 sigma^2)``.

    ``points`` are ``(x, y)`` in raster coordinates; contributions beyond
    ``truncate * sigma`` are dropped.
    """
    if sigma <= 0:
        raise RasterError("sigma must be positive")
    h, w = shape
    out = np.zeros((h, w), dtype=np.float64)
    reach = truncate * sigma
    for px, py in np.asarray(points, dtype=float).reshape(-1, 2):
        i0, i1 = max(int(math.floor(px - reach)), 0), min(int(math.ceil(px + reach)) + 1, w)
        j0, j1 = max(int(math.floor(py - reach)), 0), min(int(math.ceil(py + reach)) + 1, h)
        if i0 >= i1 or j0 >= j1:
            continue
        dx2 = (np.arange(i0, i1) - px) ** 2
        dy2 = (np.arange(j0, j1) - py) ** 2
        g = np.exp(-(dy2[:, None] + dx2[None, :]) / (2.0 * sigma * sigma))
        np.maximum(out[j0:j1, i0:i1], g, out=out[j0:j1, i0:i1])
    return out.astype(np.float32)


def orientation_map(graph: BoundaryGraph, frame, thickness: float = 1.0) -> np.ndarray:
    """Two-channel map of the unit tangent of the nearest edge.

    Foreground pixels (as in ``rasterize_graph``) store ``(dx, dy)`` mapped
    from [-1, 1] to [0, 1], with the sign canonicalized to ``dx >= 0``
    (``dy >= 0`` when ``dx == 0``); background pixels hold 0.5.
    """
    if thickness < 1:
        raise RasterError("thickness must be >= 1")
    rect = frame_rect(frame)
    h, w = raster_shape(frame)
    best = np.full((h, w), np.inf)
    out = np.full((h, w, 2), 0.5, dtype=np.float64)
    half = thickness / 2.0
    for seg in graph.segments():
        ax, ay, bx, by = seg
        length = math.hypot(bx - ax, by - ay)
        if length == 0:
            continue
        tx, ty = (bx - ax) / length, (by - ay) / length
        if tx < 0 or (tx == 0 and ty < 0):
            tx, ty = -tx, -ty
        win = _segment_windows(seg, rect, h, w, half)
        if win is None:
            continue
        rows, cols, gx, gy = win
        d = point_segment_distance(gx, gy, *seg)
        upd = (d <= half + 1e-9) & (d < best[rows, cols])
        best[rows, cols][upd] = d[upd]
        out[rows, cols, 0][upd] = (tx + 1.0) / 2.0
        out[rows, cols, 1][upd] = (ty + 1.0) / 2.0
    return out.astype(np.float32)


# ---------------------------------------------------------------------------
# File formats

def write_csbt(path, array: np.ndarray) -> None:
    """Write a tensor: magic, u32 rank, u32 dims, little-endian f32 data."""
    Path(path).write_bytes(encode_csbt(array))


def read_csbt(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"tensor file not found: {path}")
    return decode_csbt(path.read_bytes(), source=str(path))


def encode_csbt(array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array, dtype="<f4")
    return CSBT_MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes()


def decode_csbt(blob: bytes, source: str = "<bytes>", with_size: bool = False):
    """Decode one tensor. With ``with_size`` trailing bytes are allowed and
    ``(array, bytes_used)`` is returned, for reading concatenated tensors."""
    if blob[:4] != CSBT_MAGIC:
        raise RasterError(f"{source}: not a CSBT tensor (bad magic)")
    if len(blob) < 8:
        raise RasterError(f"{source}: truncated header")
    (rank,) = struct.unpack_from("<I", blob, 4)
    end = 8 + 4 * rank
    if len(blob) < end:
        raise RasterError(f"{source}: truncated header")
    dims = struct.unpack_from(f"<{rank}I", blob, 8)
    count = int(np.prod(dims)) if rank else 1
    size = end + 4 * count
    if len(blob) < size or (len(blob) != size and not with_size):
        raise RasterError(f"{source}: expected {count} floats, found {(len(blob) - end) // 4}")
    arr = np.frombuffer(blob, dtype="<f4", offset=end, count=count).reshape(dims).copy()
    return (arr, size) if with_size else arr


def write_pgm(path, map_: np.ndarray) -> None:
    """8-bit binary PGM (P5) of one channel, values scaled from [0, 1]."""
    arr = _single_channel(map_, "write_pgm")
    data = np.clip(np.rint(np.asarray(arr, dtype=float) * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes())
