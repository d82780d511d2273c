import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from trajanomaly.graph import (MIN_DISTANCE, build_graph, edge_weight, edge_weights, identity_graph,
                               normalize_adjacency, to_relative)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def dense_normalize(A):
    A_tilde = A + np.eye(len(A))
    D = np.diag(A_tilde.sum(axis=1))
    D_is = np.linalg.inv(np.sqrt(D))
    return D_is @ A_tilde @ D_is


def test_to_relative_examples():
    w = np.array([[0, 0], [1, 0], [2, 0]], dtype=float)[:, None, :]
    assert np.array_equal(to_relative(w)[:, 0], [[0, 0], [1, 0], [1, 0]])
    assert np.array_equal(to_relative(np.ones((5, 2, 2))), np.zeros((5, 2, 2)))


@given(arrays(np.float64, (6, 3, 2), elements=finite), finite, finite)
def test_to_relative_translation_invariant(w, dx, dy):
    shifted = w + np.array([dx, dy])
    assert np.allclose(to_relative(shifted), to_relative(w), atol=1e-9)
    assert np.array_equal(to_relative(w)[0], np.zeros((3, 2)))


def test_edge_weight_examples():
    assert edge_weight((1.5, 2.0), (1.5, 2.0)) == 0.0
    assert edge_weight((3, 4), (0, 0)) == pytest.approx(0.2, abs=1e-15)
    assert edge_weight((1, 0), (0, 0)) == 1.0
    assert edge_weight((1e-9, 0), (0, 0)) == 1.0 / MIN_DISTANCE


@given(st.tuples(finite, finite), st.tuples(finite, finite), st.floats(0.1, 10))
def test_edge_weight_symmetry_and_scale(a, b, c):
    w = edge_weight(a, b)
    assert w == edge_weight(b, a)
    assert w >= 0
    d = np.hypot(a[0] - b[0], a[1] - b[1])
    if d > 1e-3:
        scaled = edge_weight(np.multiply(a, c), np.multiply(b, c))
        assert scaled == pytest.approx(w / c, rel=1e-9)


def test_normalize_small_cases():
    assert np.array_equal(normalize_adjacency(np.zeros((1, 1))), [[1.0]])
    assert np.allclose(normalize_adjacency(np.array([[0, 1], [1, 0.0]])), 0.5, atol=1e-15)
    assert np.array_equal(normalize_adjacency(np.zeros((3, 3))), np.eye(3))


def test_normalize_matches_dense_oracle(rng):
    for _ in range(20):
        n = int(rng.integers(1, 9))
        A = rng.uniform(0, 5, (n, n))
        A = A + A.T
        np.fill_diagonal(A, 0)
        assert np.allclose(normalize_adjacency(A), dense_normalize(A), rtol=0, atol=1e-12)


def test_identical_agents_give_identity():
    w = np.cumsum(np.ones((10, 1, 2)), axis=0).repeat(3, axis=1)
    g = build_graph(w)
    assert np.array_equal(g.A, np.broadcast_to(np.eye(3), (10, 3, 3)))


def test_diverging_agents_weights_decrease():
    t = np.arange(12, dtype=float)
    a = np.stack([t, np.zeros_like(t)], -1)
    b = np.stack([t, 0.05 * t ** 2], -1)  # lateral speed keeps growing
    V = to_relative(np.stack([a, b], axis=1))
    w = np.array([edge_weights(v)[0, 1] for v in V[1:]])
    direct = np.array([edge_weight(v[0], v[1]) for v in V[1:]])
    assert np.array_equal(w, direct)
    assert np.all(np.diff(w) < 0)


def test_build_graph_permutation(rng):
    w = rng.normal(size=(8, 4, 2)).cumsum(axis=0)
    g = build_graph(w)
    for perm in itertools.permutations(range(4)):
        p = list(perm)
        gp = build_graph(w[:, p])
        assert np.array_equal(gp.V, g.V[:, p])
        assert np.array_equal(gp.A, g.A[:, p][:, :, p])


def test_identity_graph(rng):
    w = rng.normal(size=(5, 3, 2))
    g = identity_graph(w)
    assert np.array_equal(g.V, build_graph(w).V)
    assert np.array_equal(g.A[2], np.eye(3))


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_laplacian_properties(n, seed):
    V = np.random.default_rng(seed).normal(size=(n, 2))
    if n > 1:
        V[0] = V[1]  # exercise the zero-distance branch
    A = edge_weights(V)
    assert np.array_equal(A, A.T)
    assert np.all(np.diag(A) == 0)
    if n > 1:
        assert A[0, 1] == 0
    A_hat = normalize_adjacency(A)
    assert np.allclose(A_hat, A_hat.T, rtol=0, atol=1e-12)
    assert np.all(np.diag(A_hat) > 0)
    assert np.allclose(A_hat, dense_normalize(A), rtol=0, atol=1e-12)
