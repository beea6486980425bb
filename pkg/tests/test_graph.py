from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_graph
from curbgraph.geometry import Rect, project_onto_polyline, sample_every, smooth_polyline
from curbgraph.graph import (
    BoundaryGraph,
    GraphError,
    clip_graph,
    load_graph,
    rasterize_graph,
    save_graph,
    shortest_path_length,
    snap_vertex,
)
from oracles import all_simple_path_min, brute_rasterize, snap_linear


def chain(*pts):
    g = BoundaryGraph.from_arrays(pts)
    for i in range(len(pts) - 1):
        g.add_edge(i, i + 1)
    return g


# -- invariants of the type ---------------------------------------------------

def test_rejects_self_loops_missing_endpoints_and_duplicate_ids():
    g = BoundaryGraph.from_arrays([(0, 0), (1, 0)])
    with pytest.raises(GraphError):
        g.add_edge(0, 0)
    with pytest.raises(GraphError):
        g.add_edge(0, 7)
    with pytest.raises(GraphError):
        g.add_vertex(1, 5, 5)


def test_duplicate_edges_collapse():
    g = BoundaryGraph.from_arrays([(0, 0), (1, 0)], [(0, 1), (1, 0)])
    assert g.edges() == [(0, 1)]


def test_json_layout_is_sorted_with_smaller_id_first(tmp_path):
    g = BoundaryGraph()
    g.add_vertex(5, 1.5, 2.0)
    g.add_vertex(2, 0.0, 0.0)
    g.add_edge(5, 2)
    doc = json.loads(g.to_json())
    assert [v["id"] for v in doc["vertices"]] == [2, 5]
    assert doc["edges"] == [[2, 5]]
    save_graph(g, tmp_path / "g.json")
    assert load_graph(tmp_path / "g.json") == g


def test_malformed_graph_file_names_the_path(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"vertices": [{"id": 0}], "edges": []}')
    with pytest.raises(GraphError, match="bad.json"):
        load_graph(p)
    with pytest.raises(FileNotFoundError, match="missing.json"):
        load_graph(tmp_path / "missing.json")


# -- rasterize_graph ---------------------------------------------------------------

def test_rasterize_axis_aligned_segment():
    g = chain((0, 5), (10, 5))
    r = rasterize_graph(g, Rect(0, 0, 11, 11), 1)
    expect = np.zeros((11, 11), dtype=np.float32)
    expect[5, 0:11] = 1
    assert np.array_equal(r, expect)


def test_rasterize_empty_graph_is_zero():
    assert not rasterize_graph(BoundaryGraph(), Rect(0, 0, 7, 5)).any()


def test_rasterize_diagonal_matches_brute_force():
    g = chain((0, 0), (10, 10))
    r = rasterize_graph(g, Rect(0, 0, 11, 11), 1) > 0
    assert np.array_equal(r, brute_rasterize(g, 0, 0, 11, 11, 1.0))
    assert np.array_equal(np.nonzero(r)[0], np.arange(11))  # the main diagonal only


@given(st.integers(0, 10_000), st.floats(1.0, 4.0))
def test_rasterize_matches_brute_force_on_random_graphs(seed, thickness):
    g = random_graph(np.random.default_rng(seed), 6, 0.3, span=20)
    r = rasterize_graph(g, Rect(-2, -3, 22, 21), thickness) > 0
    assert np.array_equal(r, brute_rasterize(g, -2, -3, 24, 24, thickness))


@given(st.integers(0, 10_000), st.integers(-50, 50), st.integers(-50, 50))
def test_rasterize_translation_equivariant(seed, dx, dy):
    g = random_graph(np.random.default_rng(seed), 5, 0.4, span=25)
    frame = Rect(0, 0, 30, 30)
    a = rasterize_graph(g, frame, 1)
    b = rasterize_graph(g.translated(dx, dy), frame.translated(dx, dy), 1)
    assert np.array_equal(a, b)


def test_rasterize_rejects_thin_lines():
    with pytest.raises(ValueError):
        rasterize_graph(chain((0, 0), (1, 1)), Rect(0, 0, 3, 3), 0.5)


# -- shortest paths ------------------------------------------------------------------

def test_shortest_path_examples():
    g = chain((0, 0), (3, 4), (3, 10))
    assert shortest_path_length(g, 1, 1) == 0.0
    assert shortest_path_length(g, 0, 2) == pytest.approx(11.0)
    g.add_vertex(9, 50, 50)
    assert shortest_path_length(g, 0, 9) is None
    with pytest.raises(GraphError):
        shortest_path_length(g, 0, 42)


@pytest.mark.parametrize("seed", range(5))
def test_shortest_path_matches_path_enumeration(seed):
    g = random_graph(np.random.default_rng(seed), 20, 0.12)
    for a, b in [(0, 19), (3, 11), (5, 6), (2, 17)]:
        got = shortest_path_length(g, a, b)
        want = all_simple_path_min(g, a, b)
        assert (got is None) == (want is None)
        if want is not None:
            assert got == pytest.approx(want, abs=1e-9)


@given(st.integers(0, 10_000))
def test_shortest_path_symmetric_and_triangle(seed):
    g = random_graph(np.random.default_rng(seed), 9, 0.35)
    d = {(a, b): shortest_path_length(g, a, b) for a in g.ids for b in g.ids}
    for a in g.ids:
        for b in g.ids:
            # the two directions add the same edge lengths in opposite order
            assert (d[a, b] is None) == (d[b, a] is None)
            if d[a, b] is not None:
                assert d[a, b] == pytest.approx(d[b, a], abs=1e-9)
            for c in g.ids:
                if None not in (d[a, b], d[b, c]):
                    assert d[a, c] is not None
                    assert d[a, c] <= d[a, b] + d[b, c] + 1e-9


# -- snapping ----------------------------------------------------------------------

def test_snap_examples():
    g = BoundaryGraph.from_arrays([(0, 0), (10, 0), (5, 5)])
    assert snap_vertex(g, (10, 0), 1) == 1
    assert snap_vertex(g, (50, 50), 20) is None
    assert snap_vertex(g, (5, 0), 10) == 0  # equidistant from 0 and 1


@given(st.integers(0, 10_000), st.floats(0, 30), st.floats(0, 30), st.floats(0.5, 20))
def test_snap_matches_linear_scan(seed, x, y, radius):
    g = random_graph(np.random.default_rng(seed), 12, 0.0)
    assert snap_vertex(g, (x, y), radius) == snap_linear(g, (x, y), radius)


# -- clipping and polylines -------------------------------------------------------

def test_clip_cuts_edges_at_the_border():
    g = chain((-10, 5), (10, 5))
    c = clip_graph(g, Rect(0, 0, 20, 20))
    assert sorted(map(tuple, c.positions().tolist())) == [(0.0, 5.0), (10.0, 5.0)]
    assert c.num_edges == 1


def test_polylines_of_a_loop_and_a_chain():
    g = BoundaryGraph.from_arrays([(0, 0), (4, 0), (4, 4), (0, 4), (10, 0), (12, 0), (14, 0)],
                                  [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6)])
    lines = g.polylines()
    closed = [ids for _, c, ids in lines if c]
    open_ = [ids for _, c, ids in lines if not c]
    assert closed == [[0, 1, 2, 3]]
    assert open_ == [[4, 5, 6]]


def test_sample_every_fixed_step_plus_end():
    pts = sample_every(np.array([[0.0, 0.0], [10.0, 0.0]]), 4.0)
    assert pts[:, 0].tolist() == [0.0, 4.0, 8.0, 10.0]
    pts = sample_every(np.array([[0.0, 0.0], [8.0, 0.0]]), 4.0)
    assert pts[:, 0].tolist() == [0.0, 4.0, 8.0]


def test_smooth_polyline_keeps_endpoints():
    pts = np.array([[0, 0], [1, 1], [2, 0], [3, 1], [4, 0]], dtype=float)
    out = smooth_polyline(pts, 1)
    assert np.array_equal(out[[0, -1]], pts[[0, -1]])
    assert out[1].tolist() == pytest.approx([1.0, 1 / 3])


def test_project_onto_polyline():
    d, s = project_onto_polyline(np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]]), (12.0, 5.0))
    assert d == pytest.approx(2.0)
    assert s == pytest.approx(15.0)
    assert math.isclose(project_onto_polyline(np.array([[1.0, 1.0]]), (4.0, 5.0))[0], 5.0)
