import math

import numpy as np
import pytest

from oracles import ctc_enumerate
from symassoc.ctc import (
    CtcInfeasibleError,
    best_path_decode,
    ctc_delta,
    ctc_lattice,
    ctc_target,
    extend_labels,
    min_frames,
)
from symassoc.numerics import Rng, logsumexp, softmax_rows

A, BLANK = 0, 1  # one concept plus blank


def random_case(rng, max_T=8, max_k=3, max_C=3):
    C = rng.integers(1, max_C + 1)
    while True:
        k = rng.integers(0, max_k + 1)
        labels = rng.integers(0, C, size=k).tolist() if k else []
        T = rng.integers(1, max_T + 1)
        if T >= min_frames(labels):
            break
    z = softmax_rows(rng.normal((T, C + 1)) * 2.0)
    return z, labels


def test_extended_labeling():
    np.testing.assert_array_equal(extend_labels([0, 2], blank=3), [3, 0, 3, 2, 3])


def test_single_frame_single_label():
    z = np.array([[0.3, 0.7]])
    lat = ctc_lattice(z, [A])
    assert lat.log_prob == pytest.approx(math.log(0.3), abs=1e-14)
    np.testing.assert_allclose(ctc_target(lat, z), [[1.0, 0.0]])


def test_two_frames_uniform():
    # paths aa, a-, -a each with probability 1/4
    z = np.full((2, 2), 0.5)
    lat = ctc_lattice(z, [A])
    assert lat.log_prob == pytest.approx(math.log(0.75), abs=1e-14)
    np.testing.assert_allclose(ctc_target(lat, z), [[2 / 3, 1 / 3], [2 / 3, 1 / 3]], atol=1e-12)


def test_too_short():
    with pytest.raises(CtcInfeasibleError, match="sequence too short"):
        ctc_lattice(np.full((2, 2), 0.5), [A, A])
    ctc_lattice(np.full((3, 2), 0.5), [A, A])


def test_empty_transcript_is_all_blank():
    z = softmax_rows(Rng(0).normal((4, 3)))
    lat = ctc_lattice(z, [])
    assert lat.log_prob == pytest.approx(np.log(z[:, 2]).sum(), abs=1e-12)


def test_matches_enumeration():
    rng = Rng(11)
    for _ in range(100):
        z, labels = random_case(rng)
        logp, occ = ctc_enumerate(z, labels)
        lat = ctc_lattice(z, labels)
        assert lat.log_prob == pytest.approx(logp, abs=1e-10)
        np.testing.assert_allclose(ctc_target(lat, z), occ, atol=1e-10)


def test_forward_backward_consistency():
    rng = Rng(5)
    for _ in range(30):
        z, labels = random_case(rng, max_T=12, max_k=4, max_C=5)
        lat = ctc_lattice(z, labels)
        logz = np.log(z[:, lat.extended])
        for t in range(z.shape[0]):
            assert logsumexp(lat.log_fw[t] + lat.log_bw[t] - logz[t]) == pytest.approx(
                lat.log_prob, abs=1e-8)


def test_target_rows_sum_to_one():
    rng = Rng(9)
    for _ in range(20):
        z, labels = random_case(rng, max_T=20, max_k=6, max_C=6)
        y = ctc_target(ctc_lattice(z, labels), z)
        np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-10)


def test_delta():
    z = softmax_rows(Rng(2).normal((3, 4)))
    np.testing.assert_array_equal(ctc_delta(z, z), 0.0)
    onehot = np.eye(4)[[0, 1, 2]]
    uniform = np.full((3, 4), 0.25)
    np.testing.assert_allclose(ctc_delta(uniform, onehot), uniform - onehot)
    np.testing.assert_allclose(ctc_delta(z, onehot).sum(axis=1), 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        ctc_delta(z, z[:2])


def onehot_rows(indices, K):
    return np.eye(K)[indices]


def test_best_path_collapse():
    a, c, b = 0, 2, 3
    assert best_path_decode(onehot_rows([b, a, a, b, c], 4)) == [a, c]
    assert best_path_decode(onehot_rows([b, b, b], 4)) == []
    assert best_path_decode(onehot_rows([a, b, a], 4)) == [a, a]


def test_best_path_ties_prefer_lowest_index():
    assert best_path_decode(np.array([[0.4, 0.4, 0.2]])) == [0]


def test_decode_is_idempotent():
    rng = Rng(4)
    K = 5
    for _ in range(50):
        labels = rng.integers(0, K - 1, size=rng.integers(0, 7)).tolist()
        frames = [K - 1]
        for l in labels:
            frames += [l, K - 1]
        assert best_path_decode(onehot_rows(frames, K)) == labels
