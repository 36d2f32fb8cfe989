import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelemb import crf


def random_instance(rng, k, m, scale=1.0):
    return (rng.normal(0, scale, size=(k, m)),
            crf.CrfParams(rng.normal(0, scale, size=(m, m)), rng.normal(0, scale, size=m),
                          rng.normal(0, scale, size=m)))


def brute_scores(emissions, params):
    k, m = emissions.shape
    paths = list(itertools.product(range(m), repeat=k))
    return paths, np.array([crf.path_score(emissions, list(p), params) for p in paths])


def brute_log_z(emissions, params):
    _, scores = brute_scores(emissions, params)
    peak = scores.max()
    return peak + math.log(np.exp(scores - peak).sum())


def test_singleton_uniform():
    assert crf.log_partition(np.zeros((1, 2)), crf.CrfParams.zeros(2)) == pytest.approx(math.log(2))


def test_two_by_two_zero():
    assert crf.log_partition(np.zeros((2, 2)), crf.CrfParams.zeros(2)) == pytest.approx(math.log(4))


def test_hand_chosen_two_by_two():
    em = np.array([[1.0, -0.5], [0.3, 2.0]])
    p = crf.CrfParams(np.array([[0.2, -1.0], [0.7, 0.1]]), np.array([0.5, 0.0]), np.array([0.0, -0.3]))
    paths = {
        (0, 0): 0.5 + 1.0 + 0.2 + 0.3 + 0.0,
        (0, 1): 0.5 + 1.0 - 1.0 + 2.0 - 0.3,
        (1, 0): 0.0 - 0.5 + 0.7 + 0.3 + 0.0,
        (1, 1): 0.0 - 0.5 + 0.1 + 2.0 - 0.3,
    }
    expected = math.log(sum(math.exp(v) for v in paths.values()))
    assert abs(crf.log_partition(em, p) - expected) < 1e-10


def test_single_label_nll_zero():
    em = np.random.default_rng(0).normal(size=(4, 1))
    assert crf.sequence_nll(em, [0, 0, 0, 0], crf.CrfParams.zeros(1)) == pytest.approx(0.0, abs=1e-12)


def test_uniform_nll():
    assert crf.sequence_nll(np.zeros((3, 2)), [0, 1, 0], crf.CrfParams.zeros(2)) == pytest.approx(3 * math.log(2))


def test_uniform_marginals():
    np.testing.assert_allclose(crf.marginals(np.zeros((4, 3)), crf.CrfParams.zeros(3)), 1 / 3)
    np.testing.assert_allclose(crf.marginals(np.ones((3, 1)), crf.CrfParams.zeros(1)), 1.0)


def test_viterbi_single_label_and_factorized():
    assert crf.viterbi(np.zeros((3, 1)), crf.CrfParams.zeros(1))[0] == [0, 0, 0]
    em = np.random.default_rng(1).normal(size=(6, 4))
    assert crf.viterbi(em, crf.CrfParams.zeros(4))[0] == list(em.argmax(axis=1))


def test_viterbi_ties_prefer_lowest_id():
    assert crf.viterbi(np.zeros((4, 3)), crf.CrfParams.zeros(3)) == ([0, 0, 0, 0], 0.0)
    em = np.array([[1.0, 1.0], [0.0, 0.0]])
    path, score = crf.viterbi(em, crf.CrfParams.zeros(2))
    assert path == [0, 0] and score == 1.0
    # a later tie must not override an earlier, smaller label
    trans = np.array([[0.0, 0.0], [1.0, 0.0]])
    em = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert crf.viterbi(em, crf.CrfParams(trans, np.zeros(2), np.zeros(2)))[0] == [1, 0]


@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**31 - 1))
@settings(max_examples=120, deadline=None)
def test_against_exhaustive_enumeration(k, m, seed):
    rng = np.random.default_rng(seed)
    em, p = random_instance(rng, k, m)
    paths, scores = brute_scores(em, p)
    log_z = brute_log_z(em, p)
    assert abs(math.exp(crf.log_partition(em, p)) - math.exp(log_z)) <= 1e-8 * math.exp(log_z)

    gold = list(rng.integers(0, m, size=k))
    assert crf.sequence_nll(em, gold, p) == pytest.approx(log_z - crf.path_score(em, gold, p), abs=1e-9)

    path, score = crf.viterbi(em, p)
    assert score == pytest.approx(scores.max(), abs=1e-10)
    assert crf.path_score(em, path, p) == pytest.approx(score, abs=1e-10)
    assert score >= crf.path_score(em, gold, p) - 1e-12

    probs = np.exp(scores - log_z)
    post = np.zeros((k, m))
    for prob, pth in zip(probs, paths):
        post[np.arange(k), list(pth)] += prob
    np.testing.assert_allclose(crf.marginals(em, p), post, atol=1e-10)


@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**31 - 1))
@settings(max_examples=50, deadline=None)
def test_integer_scores_break_ties_consistently(k, m, seed):
    rng = np.random.default_rng(seed)
    em = rng.integers(-1, 2, size=(k, m)).astype(float)
    p = crf.CrfParams(rng.integers(-1, 2, size=(m, m)).astype(float), np.zeros(m), np.zeros(m))
    paths, scores = brute_scores(em, p)
    path, score = crf.viterbi(em, p)
    assert score == scores.max()
    # itertools.product enumerates in lexicographic order
    assert path == list(paths[int(np.argmax(scores))])


@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**31 - 1), st.floats(-5, 5))
@settings(max_examples=50, deadline=None)
def test_column_shift(k, m, seed, c):
    rng = np.random.default_rng(seed)
    em, p = random_instance(rng, k, m)
    t = int(rng.integers(0, k))
    shifted = em.copy()
    shifted[t] += c
    assert crf.log_partition(shifted, p) == pytest.approx(crf.log_partition(em, p) + c, abs=1e-9)
    assert crf.viterbi(shifted, p)[0] == crf.viterbi(em, p)[0]


@pytest.mark.parametrize("seed", range(6))
def test_nll_gradients(seed):
    rng = np.random.default_rng(seed)
    k, m = int(rng.integers(1, 6)), int(rng.integers(1, 5))
    em, p = random_instance(rng, k, m)
    gold = list(rng.integers(0, m, size=k))
    nll, d_em, dp = crf.nll_and_grads(em, gold, p)
    assert nll == pytest.approx(crf.sequence_nll(em, gold, p), abs=1e-12)
    onehot = np.eye(m)[gold]
    np.testing.assert_allclose(d_em, crf.marginals(em, p) - onehot, atol=1e-12)

    def numeric(arr):
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + 1e-6
            up = crf.sequence_nll(em, gold, p)
            arr[idx] = old - 1e-6
            down = crf.sequence_nll(em, gold, p)
            arr[idx] = old
            g[idx] = (up - down) / 2e-6
        return g

    for analytic, arr in ((d_em, em), (dp.transitions, p.transitions), (dp.start, p.start), (dp.end, p.end)):
        np.testing.assert_allclose(analytic, numeric(arr), atol=1e-7)


def test_softmax_loss_gradient():
    rng = np.random.default_rng(3)
    em = rng.normal(size=(3, 4))
    nll, d = crf.softmax_nll_and_grads(em, [0, 3, 1])
    probs = np.exp(em) / np.exp(em).sum(axis=1, keepdims=True)
    assert nll == pytest.approx(-np.log(probs[[0, 1, 2], [0, 3, 1]]).sum())
    np.testing.assert_allclose(d, probs - np.eye(4)[[0, 3, 1]], atol=1e-12)


def test_bad_shapes_rejected():
    with pytest.raises(ValueError):
        crf.log_partition(np.zeros((0, 3)), crf.CrfParams.zeros(3))
    with pytest.raises(ValueError):
        crf.path_score(np.zeros((2, 2)), [0], crf.CrfParams.zeros(2))
