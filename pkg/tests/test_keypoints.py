from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curbgraph.geometry import Rect
from curbgraph.graph import BoundaryGraph
from curbgraph.keypoints import (
    CORNER_ISOLATED,
    CORNER_ROUNDED,
    INTERSECT_AUX,
    INTERSECT_CORE,
    GRID,
    Keypoint,
    city_keypoints,
    corner_keypoints,
    dedupe_keypoints,
    frame_keypoints,
    intersection_keypoints,
    keypoint_label_map,
)
from curbgraph.raster import render_gaussian_points
from curbgraph.synth import CitySpec, generate_city
from curbgraph.tiling import split_city, split_tile


def chain(pts):
    g = BoundaryGraph.from_arrays(pts)
    for i in range(len(pts) - 1):
        g.add_edge(i, i + 1)
    return g


def dense(points, step=0.05):
    """Polyline resampled every ``step`` px, with the arc parameter of each sample."""
    pts = np.asarray(points, dtype=float)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.arange(0.0, cum[-1], step)
    return np.stack([np.interp(s, cum, pts[:, 0]), np.interp(s, cum, pts[:, 1])], axis=1), s


def tangent_sweep(points, window):
    """Heading change between s - window and s + window at every dense sample.

    Positions past either end of the open polyline read the end heading.
    """
    xy, s = dense(points)
    d = np.diff(xy, axis=0)
    heading = np.arctan2(d[:, 1], d[:, 0])
    step = s[1] - s[0]
    k = int(round(window / step))
    n = len(heading)
    change = np.empty(n)
    for i in range(n):
        change[i] = abs(math.remainder(heading[min(i + k, n - 1)] - heading[max(i - k, 0)], 2 * math.pi))
    return xy[:-1], s[:-1], change


def arc_position(xy, s, p):
    return s[np.argmin(np.hypot(xy[:, 0] - p[0], xy[:, 1] - p[1]))]


QUARTER = ([(120.0, 60.0)]
           + [(100 + 20 * math.cos(t), 100 + 20 * math.sin(t)) for t in np.linspace(0, math.pi / 2, 40)]
           + [(60.0, 120.0)])


def test_straight_line_has_no_corners():
    assert corner_keypoints(chain([(0, 0), (37, 0), (100, 0)])) == []


def test_right_angle_gives_one_isolated_corner():
    assert corner_keypoints(chain([(0, 0), (50, 0), (50, 50)]), 30.0) == [Keypoint(50.0, 0.0, CORNER_ISOLATED)]


def test_quarter_circle_gives_a_rounded_run_matching_the_tangent_sweep():
    kps = corner_keypoints(chain(QUARTER), 30.0, 8.0)
    assert kps and {k.kind for k in kps} == {CORNER_ROUNDED}
    xy, s, change = tangent_sweep(QUARTER, 8.0)
    qualifying = s[change >= math.radians(30)]
    pos = sorted(arc_position(xy, s, (k.x, k.y)) for k in kps)
    # the run spans the qualifying stretch at 1 px spacing
    assert pos[0] == pytest.approx(qualifying.min(), abs=1.0)
    assert pos[-1] == pytest.approx(qualifying.max(), abs=1.0)
    assert np.all(np.diff(pos) <= 1.0 + 1e-6)
    # the qualifying stretch sits inside the arc: 40 px of straight lead-in, then 31.4 px of arc
    assert 40 < qualifying.min() < qualifying.max() < 40 + 10 * math.pi
    for p in pos:
        i = np.argmin(np.abs(s - p))
        assert change[i] >= math.radians(30) - math.radians(2)


@given(st.integers(0, 10_000))
@settings(max_examples=25)
def test_every_corner_turns_at_least_the_threshold(seed):
    rng = np.random.default_rng(seed)
    pts = np.cumsum(rng.uniform(-40, 40, size=(6, 2)), axis=0)
    g = chain([tuple(p) for p in pts])
    for k in corner_keypoints(g, 30.0, 8.0):
        xy, s, change = tangent_sweep(pts, 8.0)
        i = np.argmin(np.hypot(xy[:, 0] - k.x, xy[:, 1] - k.y))
        lo, hi = max(i - 30, 0), i + 30  # within 1.5 px of arc
        assert change[lo:hi].max() >= math.radians(30) - 1e-6


def test_core_edge_crossing_is_shared_by_both_neighbours():
    frames = split_city((1, 2), 1000, 1000, 50)
    g = chain([(900, 437), (1100, 437)])
    for f in frames:
        assert intersection_keypoints(g, f, None) == [Keypoint(1000.0, 437.0, INTERSECT_CORE)]


def test_no_crossings_inside_the_patch():
    f = split_tile((0, 0), 1000, 1000, 50)[0]
    assert intersection_keypoints(chain([(100, 100), (400, 300)]), f, None) == []


def test_aux_lines_every_256_px():
    f = split_tile((0, 0), 1000, 1000, 50)[0]
    got = intersection_keypoints(chain([(0, 100), (600, 100)]), f, 256)
    aux = [(k.x, k.y) for k in got if k.kind == INTERSECT_AUX]
    assert aux == [(256.0, 100.0), (512.0, 100.0)]
    with pytest.raises(ValueError):
        intersection_keypoints(chain([(0, 100), (600, 100)]), f, 0)


@pytest.mark.parametrize("seed", range(3))
def test_overlap_keypoints_identical_for_adjacent_frames(seed):
    spec = CitySpec(seed=seed, tiles=(1, 2), tile_size=1000)
    gt = generate_city(spec)
    frames = split_city((1, 2), 1000, 1000, 50)
    a, b = frames
    ov = a.expanded.intersection(b.expanded)
    inside = lambda kps: sorted((k.x, k.y) for k in kps if ov.contains(k.x, k.y))
    ka, kb = intersection_keypoints(gt, a), intersection_keypoints(gt, b)
    assert inside(ka) and inside(ka) == inside(kb)


@pytest.mark.parametrize("seed", range(3))
def test_city_keypoints_are_separated_and_on_the_boundary(seed):
    gt = generate_city(CitySpec(seed=seed, tiles=(1, 1), tile_size=1000))
    kps = city_keypoints(gt, Rect(0, 0, 1000, 1000), 1000, 256.0)
    pts = np.array([(k.x, k.y) for k in kps])
    d = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
    np.fill_diagonal(d, np.inf)
    assert d.min() > 0.5
    segs = gt.segments()
    for x, y in pts:
        ax, ay, bx, by = segs.T
        t = np.clip(((x - ax) * (bx - ax) + (y - ay) * (by - ay)) / ((bx - ax) ** 2 + (by - ay) ** 2), 0, 1)
        assert np.hypot(x - ax - t * (bx - ax), y - ay - t * (by - ay)).min() <= 0.5


def test_dedupe_keeps_the_corner():
    kps = [Keypoint(10.2, 5.0, INTERSECT_AUX), Keypoint(10.0, 5.0, CORNER_ISOLATED), Keypoint(30, 5, INTERSECT_CORE)]
    assert dedupe_keypoints(kps) == [Keypoint(10.0, 5.0, CORNER_ISOLATED), Keypoint(30, 5, INTERSECT_CORE)]


def test_frame_keypoints_resolve_grid_kind():
    f0, f1 = split_city((1, 2), 1000, 1000, 50)
    kp = [Keypoint(1000.0, 1020.0, GRID)]
    # the crossing sits on an edge of the cores below the two frames
    assert frame_keypoints(kp, f0)[0].kind == "intersect_neighbor_edge"
    assert frame_keypoints([Keypoint(1000.0, 500.0, GRID)], f1)[0].kind == INTERSECT_CORE


def test_label_map_renders_in_local_pixels():
    f = split_city((1, 2), 1000, 1000, 50)[1]
    kps = [Keypoint(1000.0, 437.0, INTERSECT_CORE)]
    m = keypoint_label_map(kps, f, 3.0)
    assert m.shape == (1100, 1100)
    assert m[487, 50] == 1.0
    assert np.array_equal(m, render_gaussian_points([(50, 487)], 3.0, (1100, 1100)))


def test_keypoint_json_round_trip():
    k = Keypoint(1.5, 2.5, CORNER_ROUNDED)
    assert Keypoint.from_dict(k.to_dict()) == k
    with pytest.raises(ValueError):
        Keypoint.from_dict({"x": 0, "y": 0, "kind": "bogus"})
