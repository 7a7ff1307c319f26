import numpy as np
import pytest

from symassoc.align import dtw, warp_targets
from symassoc.fusion import multimodal_delta, pooled_target, recode_channels, shared_channel_mask
from symassoc.numerics import Rng, softmax_rows


def test_pooled_hand_example():
    mask = np.array([True, False, True])
    out = pooled_target([[0.6, 0.3, 0.1]], [[0.8, 0.1, 0.1]], mask)
    np.testing.assert_allclose(out, [[2 / 3, 1 / 4, 1 / 12]], rtol=1e-14)


def test_pooled_equal_inputs_identity():
    y = softmax_rows(Rng(0).normal((5, 4)))
    for mask in (np.ones(4, bool), np.array([False, True, False, True])):
        np.testing.assert_allclose(pooled_target(y, y, mask), y, rtol=1e-14)


def test_blank_only_mask_keeps_own():
    rng = Rng(1)
    y_own = softmax_rows(rng.normal((4, 4)))
    y_warp = softmax_rows(rng.normal((4, 4)))
    y_own[:, 3] = 0.5
    y_own[:, :3] *= 0.5 / y_own[:, :3].sum(axis=1, keepdims=True)
    y_warp[:, 3] = 0.2
    y_warp[:, :3] *= 0.8 / y_warp[:, :3].sum(axis=1, keepdims=True)
    mask = np.array([False, False, False, True])
    np.testing.assert_allclose(pooled_target(y_own, y_warp, mask), y_own, rtol=1e-14)


def test_pooled_dominates_on_shared_channels():
    rng = Rng(2)
    y_own = softmax_rows(rng.normal((6, 5)))
    y_warp = softmax_rows(rng.normal((6, 5)))
    mask = np.array([True, False, True, False, True])
    out = pooled_target(y_own, y_warp, mask)
    pre = np.where(mask, np.maximum(y_own, y_warp), y_own)
    np.testing.assert_allclose(out * pre.sum(axis=1, keepdims=True), pre, rtol=1e-14)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)


def test_pooled_shape_errors():
    with pytest.raises(ValueError):
        pooled_target(np.ones((2, 3)) / 3, np.ones((3, 3)) / 3, np.ones(3, bool))
    with pytest.raises(ValueError):
        pooled_target(np.ones((2, 3)) / 3, np.ones((2, 3)) / 3, np.ones(4, bool))


def test_mask_from_transcripts():
    perm = np.array([2, 0, 1])
    mask = shared_channel_mask([0, 1, 1], [1, 2], perm, 3)
    # concept 1 is shared and lives on channel 0; blank (3) always set
    np.testing.assert_array_equal(mask, [True, False, False, True])


def test_identical_transcripts_mask_all_true():
    mask = shared_channel_mask([0, 1, 2, 1], [0, 1, 2, 1], np.array([1, 2, 0]), 3)
    assert mask.all()


def test_delta_modes():
    rng = Rng(3)
    z = softmax_rows(rng.normal((4, 3)))
    y_own = softmax_rows(rng.normal((4, 3)))
    y_warp = softmax_rows(rng.normal((4, 3)))
    mask = np.array([True, False, True])
    np.testing.assert_array_equal(multimodal_delta(z, z, z, mask, "pooled"), 0.0)
    d1 = multimodal_delta(z, y_own, y_warp, mask, "original")
    d2 = multimodal_delta(z, np.zeros_like(y_own), y_warp, mask, "original")
    np.testing.assert_array_equal(d1, d2)
    np.testing.assert_array_equal(d1, z - y_warp)
    for mode in ("original", "pooled"):
        d = multimodal_delta(z, y_own, y_warp, mask, mode)
        np.testing.assert_allclose(d.sum(axis=1), 0.0, atol=1e-10)
    with pytest.raises(ValueError):
        multimodal_delta(z, y_own, y_warp, mask, "average")


def test_original_mode_matches_warp_bitwise():
    rng = Rng(4)
    z_v = softmax_rows(rng.normal((7, 4)))
    z_a = softmax_rows(rng.normal((5, 4)))
    y_a = softmax_rows(rng.normal((5, 4)))
    _, path = dtw(z_v, z_a)
    warped = warp_targets(y_a, path, 7, "a2v")
    d = multimodal_delta(z_v, z_v, warped, np.ones(4, bool), "original")
    np.testing.assert_array_equal(d, z_v - warped)


def test_recode_moves_concept_columns():
    y = np.array([[0.1, 0.2, 0.3, 0.4]])
    # concept 0 sits on channel 2 in the source coding and on channel 0 in the target
    out = recode_channels(y, perm_from=[2, 0, 1], perm_to=[0, 1, 2])
    np.testing.assert_array_equal(out, [[0.3, 0.1, 0.2, 0.4]])


def test_recode_identity_and_inverse():
    rng = Rng(5)
    y = softmax_rows(rng.normal((5, 6)))
    p, q = rng.permutation(5), rng.permutation(5)
    np.testing.assert_array_equal(recode_channels(y, p, p), y)
    np.testing.assert_array_equal(recode_channels(recode_channels(y, p, q), q, p), y)
    for s in range(5):
        np.testing.assert_array_equal(recode_channels(y, p, q)[:, q[s]], y[:, p[s]])
    with pytest.raises(ValueError):
        recode_channels(y, p[:4], q)


def test_timestep_gate():
    mask = np.array([True, False, True])
    y_own = np.array([[0.1, 0.8, 0.1],   # dominated by non-shared channel 1: kept
                      [0.6, 0.3, 0.1],   # dominated by shared channel 0: pooled
                      [0.1, 0.2, 0.7]])  # dominated by blank: pooled
    y_warp = np.array([[0.8, 0.1, 0.1], [0.8, 0.1, 0.1], [0.1, 0.0, 0.9]])
    out = pooled_target(y_own, y_warp, mask, gate="timestep")
    np.testing.assert_allclose(out[0], y_own[0], rtol=1e-14)
    np.testing.assert_allclose(out[1], [2 / 3, 1 / 4, 1 / 12], rtol=1e-14)
    np.testing.assert_allclose(out[2], np.array([0.1, 0.2, 0.9]) / 1.2, rtol=1e-14)
    # the channel gate pools the first frame too
    chan = pooled_target(y_own, y_warp, mask)
    np.testing.assert_allclose(chan[0], np.array([0.8, 0.8, 0.1]) / 1.7, rtol=1e-14)
    with pytest.raises(ValueError):
        pooled_target(y_own, y_warp, mask, gate="segment")
