from __future__ import annotations

import numpy as np
import pytest

from curbgraph.graph import rasterize_graph
from curbgraph.keypoints import CORNER_ISOLATED, corner_keypoints, frame_keypoints, keypoint_label_map
from curbgraph.raster import local_peaks
from curbgraph.synth import (
    CitySpec,
    KeypointParams,
    NoiseSpec,
    SpecError,
    all_keypoints,
    city_layout,
    feature_tensor,
    generate_city,
    simulate_inference,
)
from curbgraph.tiling import split_tile

SMALL = CitySpec(seed=4, tiles=(1, 1), tile_size=1000)


def test_generation_is_deterministic():
    a, b = generate_city(SMALL), generate_city(SMALL)
    assert a == b and a.to_json() == b.to_json()
    assert generate_city(CitySpec(seed=5, tiles=(1, 1), tile_size=1000)) != a


def test_every_block_is_a_closed_loop():
    g = generate_city(SMALL)
    assert all(g.degree(v) == 2 for v in g.ids)
    assert len(g.components()) == city_layout(SMALL).block_count


def test_block_count_matches_the_layout():
    spec = CitySpec(seed=1, tiles=(1, 1), tile_size=1000, block_spacing=(250.0, 250.0))
    layout = city_layout(spec)
    # fixed spacing 250 over 1000 px gives cut lines at 0, 250, 500, 750, 1000 on both axes
    assert layout.xcuts == layout.ycuts == (0.0, 250.0, 500.0, 750.0, 1000.0)
    assert layout.block_count == (len(layout.xcuts) - 1) * (len(layout.ycuts) - 1) == 16
    assert len(generate_city(spec).components()) == 16


def test_zero_radius_gives_only_isolated_corners():
    spec = CitySpec(seed=2, tiles=(1, 1), tile_size=1000, corner_radius=(0.0, 0.0), irregular_prob=0.0)
    g = generate_city(spec)
    kinds = {k.kind for k in corner_keypoints(g)}
    assert kinds == {CORNER_ISOLATED}
    assert len(g) == 4 * city_layout(spec).block_count


@pytest.mark.parametrize("spec", [
    CitySpec(tiles=(1, 1), tile_size=200, block_spacing=(300.0, 400.0)),
    CitySpec(tiles=(0, 1)),
    CitySpec(road_width=(40.0, 100.0)),
    CitySpec(noise=NoiseSpec(dropout=1.5)),
])
def test_degenerate_specs_raise(spec):
    with pytest.raises(SpecError):
        generate_city(spec)


def frame_and_keypoints(spec=SMALL):
    gt = generate_city(spec)
    frame = split_tile((0, 0), 1000, 1000, 50)[0]
    params = KeypointParams()
    return gt, frame, params, all_keypoints(gt, spec.bounds, params)


def test_zero_noise_equals_label_renderers():
    gt, frame, params, kps = frame_and_keypoints()
    kp_map, seg = simulate_inference(gt, frame, NoiseSpec(), params, 0, kps, SMALL.bounds)
    want = keypoint_label_map(frame_keypoints(kps, frame, pad=5 * params.sigma), frame, params.sigma)
    assert np.array_equal(kp_map, want)
    assert np.array_equal(seg, rasterize_graph(gt, frame, thickness=3))


def test_full_dropout_gives_an_empty_map():
    gt, frame, params, kps = frame_and_keypoints()
    kp_map, _ = simulate_inference(gt, frame, NoiseSpec(dropout=1.0), params, 0, kps)
    assert not kp_map.any()


def test_jittered_peaks_stay_near_their_keypoints():
    gt, frame, params, kps = frame_and_keypoints()
    kp_map, _ = simulate_inference(gt, frame, NoiseSpec(jitter_sigma=1.0), params, 0, kps)
    truth = np.array([frame.to_local((k.x, k.y)) for k in frame_keypoints(kps, frame, pad=5 * params.sigma)])
    peaks = np.array(local_peaks(kp_map, 0.5, 2), dtype=float)
    # only keypoints far from all others, so neighbouring bumps cannot pull the peak
    d = np.hypot(truth[:, None, 0] - truth[None, :, 0], truth[:, None, 1] - truth[None, :, 1])
    np.fill_diagonal(d, np.inf)
    inside = (truth >= 0).all(axis=1) & (truth < 1100).all(axis=1)
    lonely = truth[(d.min(axis=1) > 20.0) & inside]
    assert len(lonely) > 10
    for p in lonely:
        # 4 sigma of jitter plus half a pixel diagonal of peak rounding
        assert np.hypot(*(peaks - p).T).min() <= 4.0 + np.sqrt(0.5)


def test_feature_tensor_layout():
    gt, frame, params, kps = frame_and_keypoints()
    kp_map, seg = simulate_inference(gt, frame, NoiseSpec(), params, 0, kps)
    t = feature_tensor(kp_map, seg, frame, seed=0)
    assert t.shape == (1100, 1100, 6) and t.dtype == np.float32
    assert t.min() >= 0 and t.max() <= 1
    assert np.array_equal(t[..., 4], kp_map) and np.array_equal(t[..., 5], seg)
    assert np.array_equal(t, feature_tensor(kp_map, seg, frame, seed=0))
