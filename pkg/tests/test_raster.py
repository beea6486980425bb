from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from curbgraph.geometry import Rect
from curbgraph.graph import BoundaryGraph
from curbgraph.raster import (
    RasterError,
    connected_components,
    decode_csbt,
    encode_csbt,
    local_peaks,
    orientation_map,
    read_csbt,
    render_gaussian_points,
    skeletonize,
    write_csbt,
    write_pgm,
)
from oracles import flood_fill_components, greedy_nms, zhang_suen


def blob_map(rng, shape=(32, 32), n=6):
    """A few random filled rectangles and discs."""
    m = np.zeros(shape, dtype=np.float32)
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(n):
        cx, cy = rng.integers(0, w), rng.integers(0, h)
        if rng.random() < 0.5:
            r = rng.integers(1, 5)
            m[(xx - cx) ** 2 + (yy - cy) ** 2 <= r * r] = 1
        else:
            m[cy:cy + rng.integers(1, 8), cx:cx + rng.integers(1, 8)] = 1
    return m


def n_components(m):
    return len(flood_fill_components(m > 0, 8))


# -- skeletonize ------------------------------------------------------------

def test_skeleton_of_empty_and_single_pixel():
    z = np.zeros((5, 5))
    assert not skeletonize(z).any()
    z[2, 3] = 1
    assert np.array_equal(skeletonize(z), z)


def test_skeleton_of_3x9_rectangle_is_its_middle_row():
    m = np.zeros((7, 13))
    m[2:5, 2:11] = 1
    sk = skeletonize(m) > 0
    ref = zhang_suen(m > 0)
    # the reference keeps the middle row minus its ends; ours keeps that row too
    assert ref.sum() == 6 and np.all(ref[3, 3:9])
    assert np.all(sk[ref])
    assert np.all(m[sk] == 1)
    assert (sk & ~ref).sum() <= 3
    assert sk[3].sum() >= 7  # essentially the middle row
    assert n_components(sk) == 1


def test_skeleton_rejects_multichannel_and_non_binary():
    with pytest.raises(RasterError):
        skeletonize(np.zeros((4, 4, 2)))
    with pytest.raises(RasterError):
        skeletonize(np.full((4, 4), 0.5))


@given(st.integers(0, 100_000))
def test_skeleton_thin_idempotent_and_topology_preserving(seed):
    m = blob_map(np.random.default_rng(seed))
    sk = skeletonize(m)
    assert np.all(m[sk > 0] == 1)
    assert np.array_equal(skeletonize(sk), sk)
    assert n_components(sk) == n_components(m)
    # one pixel wide: no fully set 2x2 square survives
    b = sk > 0
    assert not (b[:-1, :-1] & b[1:, :-1] & b[:-1, 1:] & b[1:, 1:]).any()


# -- connected components ------------------------------------------------

def test_components_examples():
    m = np.zeros((4, 6))
    assert connected_components(m) == []
    m[0, 0] = m[3, 5] = 1
    comps = connected_components(m)
    assert [c.tolist() for c in comps] == [[[0, 0]], [[5, 3]]]


def test_component_connectivity_switch():
    m = np.eye(3)
    assert len(connected_components(m, 8)) == 1
    assert len(connected_components(m, 4)) == 3
    with pytest.raises(RasterError):
        connected_components(m, 6)


@given(st.integers(0, 100_000), st.sampled_from([4, 8]))
def test_components_match_flood_fill(seed, conn):
    m = blob_map(np.random.default_rng(seed), n=10)
    got = [set(map(tuple, c.tolist())) for c in connected_components(m, conn)]
    want = flood_fill_components(m > 0, conn)
    key = lambda s: min((y, x) for x, y in s)
    assert got == sorted(want, key=key)


# -- peaks --------------------------------------------------------------------

def test_single_gaussian_peak():
    m = 0.9 * render_gaussian_points([(12, 9)], 3.0, (20, 25))
    assert local_peaks(m, 0.3, 5) == [(12, 9)]
    assert local_peaks(np.full((10, 10), 0.2), 0.3, 5) == []


def test_two_close_bumps_keep_the_higher():
    m = np.maximum(0.9 * render_gaussian_points([(10, 10)], 2.0, (30, 30)),
                   0.7 * render_gaussian_points([(13, 10)], 2.0, (30, 30)))
    got = local_peaks(m, 0.3, 5)
    assert got == [(10, 10)]
    assert got == greedy_nms(m, 0.3, 5)


@given(st.integers(0, 100_000), st.integers(1, 6))
def test_peaks_match_greedy_oracle_and_are_separated(seed, radius):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 40, size=(rng.integers(0, 12), 2))
    m = render_gaussian_points(pts, 2.0, (40, 40)) * rng.uniform(0.5, 1.0)
    got = local_peaks(m, 0.3, radius)
    assert got == greedy_nms(m, 0.3, radius)
    for i, a in enumerate(got):
        assert m[a[1], a[0]] >= 0.3
        for b in got[i + 1:]:
            assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) > radius


# -- Gaussian rendering -------------------------------------------------------

def test_gaussian_examples():
    m = render_gaussian_points([(4, 5)], 3.0, (11, 11))
    assert m[5, 4] == 1.0
    assert m[5, 7] == pytest.approx(math.exp(-0.5), abs=1e-7)
    assert not render_gaussian_points([], 3.0, (4, 4)).any()
    with pytest.raises(RasterError):
        render_gaussian_points([(0, 0)], 0.0, (4, 4))


@given(st.integers(0, 100_000))
def test_gaussian_order_invariant_and_bounded(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-5, 35, size=(8, 2))
    a = render_gaussian_points(pts, 2.5, (30, 30))
    b = render_gaussian_points(pts[rng.permutation(8)], 2.5, (30, 30))
    assert np.array_equal(a, b)
    assert a.min() >= 0 and a.max() <= 1


# -- orientation ------------------------------------------------------------

def test_orientation_examples():
    frame = Rect(0, 0, 12, 12)
    horiz = BoundaryGraph.from_arrays([(10, 5), (0, 5)], [(0, 1)])
    o = orientation_map(horiz, frame)
    assert o.shape == (12, 12, 2)
    assert o[5, 3].tolist() == [1.0, 0.5]
    assert o[2, 3].tolist() == [0.5, 0.5]
    assert np.all(orientation_map(BoundaryGraph(), frame) == 0.5)
    diag = BoundaryGraph.from_arrays([(0, 0), (10, 10)], [(0, 1)])
    c = (math.sqrt(2) / 2 + 1) / 2
    assert orientation_map(diag, frame)[4, 4].tolist() == pytest.approx([c, c], abs=1e-6)


def test_orientation_vertical_sign_is_canonical():
    g = BoundaryGraph.from_arrays([(3, 9), (3, 0)], [(0, 1)])
    assert orientation_map(g, Rect(0, 0, 8, 10))[4, 3].tolist() == [0.5, 1.0]


# -- files ----------------------------------------------------------------------

@given(st.integers(0, 100_000), st.sampled_from([(3,), (4, 5), (2, 3, 6)]))
def test_csbt_round_trip_is_byte_exact(seed, shape):
    arr = np.random.default_rng(seed).random(shape).astype(np.float32)
    blob = encode_csbt(arr)
    back = decode_csbt(blob)
    assert np.array_equal(back, arr)
    assert encode_csbt(back) == blob


def test_csbt_layout_and_errors(tmp_path):
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    p = tmp_path / "a.csbt"
    write_csbt(p, arr)
    blob = p.read_bytes()
    assert blob[:4] == b"CSBT"
    assert blob[4:8] == (2).to_bytes(4, "little")
    assert blob[8:16] == (2).to_bytes(4, "little") + (3).to_bytes(4, "little")
    assert len(blob) == 16 + 6 * 4
    assert np.array_equal(read_csbt(p), arr)
    with pytest.raises(RasterError, match="bad magic"):
        decode_csbt(b"XXXX" + blob[4:])
    with pytest.raises(RasterError):
        decode_csbt(blob[:-4])
    with pytest.raises(FileNotFoundError):
        read_csbt(tmp_path / "nope.csbt")


def test_pgm_export(tmp_path):
    m = np.array([[0.0, 0.5], [1.0, 0.25]], dtype=np.float32)
    write_pgm(tmp_path / "m.pgm", m)
    assert (tmp_path / "m.pgm").read_bytes() == b"P5\n2 2\n255\n" + bytes([0, 128, 255, 64])
