"""Smoke tests: the bindings agree with simple numpy oracles."""

import numpy as np
import pytest

import emoseg


def test_conv1x1_matches_einsum():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 4, 5)).astype(np.float32)
    w = rng.normal(size=(2, 3)).astype(np.float32)
    b = rng.normal(size=(2,)).astype(np.float32)
    got = emoseg.conv1x1(x, w, b)
    want = np.einsum("oc,chw->ohw", w, x) + b[:, None, None]
    np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)


def test_softmax_spatial_sums_to_one():
    x = np.random.default_rng(1).normal(size=(2, 6, 7)).astype(np.float32)
    y = emoseg.softmax_spatial(x)
    np.testing.assert_allclose(y.sum(axis=(1, 2)), 1.0, atol=1e-5)
    assert (y > 0).all()


def test_depthwise_delta_kernel_is_identity():
    x = np.random.default_rng(2).uniform(size=(2, 5, 5)).astype(np.float32)
    w = np.zeros((2, 3, 3), dtype=np.float32)
    w[:, 1, 1] = 1.0
    np.testing.assert_array_equal(emoseg.depthwise_conv3x3(x, w), x)


def test_bilinear_identity_and_maxpool():
    x = np.random.default_rng(3).uniform(size=(1, 4, 4)).astype(np.float32)
    np.testing.assert_array_equal(emoseg.bilinear_resize(x, 4, 4), x)
    pooled = emoseg.maxpool_to(x, 2, 2)
    want = x.reshape(1, 2, 2, 2, 2).max(axis=(2, 4))
    np.testing.assert_array_equal(pooled, want)


def test_st_map_is_dilated_mask_times_events():
    rng = np.random.default_rng(4)
    m = (rng.uniform(size=(16, 16)) < 0.3).astype(np.uint8)
    e = (rng.uniform(size=(16, 16)) < 0.5).astype(np.uint8)
    got = emoseg.build_st_map(m, e)
    np.testing.assert_array_equal(got, emoseg.dilate(m) & e)


def test_metrics_hand_cases():
    a = np.zeros((8, 8), dtype=np.uint8)
    a[2:4, 2:4] = 1
    assert emoseg.jaccard(a, a) == 1.0
    assert emoseg.boundary_f(a, a) == 1.0
    assert emoseg.jaccard(a, np.zeros_like(a)) == 0.0
    assert emoseg.jaccard(np.zeros_like(a), np.zeros_like(a)) == 1.0


def test_generate_scene_shapes_and_determinism():
    cfg = emoseg.SceneConfig()
    cfg.h = cfg.w = 32
    cfg.t_frames = 2
    s1 = emoseg.generate_scene(cfg, 5)
    s2 = emoseg.generate_scene(cfg, 5)
    assert len(s1["frames"]) == 2
    assert s1["frames"][0].shape == (3, 32, 32)
    assert s1["masks"][0].shape == (32, 32)
    np.testing.assert_array_equal(s1["frames"][1], s2["frames"][1])
    np.testing.assert_array_equal(s1["events"][0], s2["events"][0])
    assert s1["ego"] == s2["ego"]


def test_infer_checkpoint_missing_file():
    with pytest.raises(Exception):
        emoseg.infer_checkpoint("/nonexistent.emoc", np.zeros((3, 64, 64), np.float32), False)
