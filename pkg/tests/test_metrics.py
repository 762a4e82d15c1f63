import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlmfm.errors import DegenerateSeriesError
from mlmfm.metrics import (
    correlation_summary,
    matrix_factor_parameter_count,
    parameter_count,
    rss_tss,
    signal_distance,
    subspace_distance,
)
from mlmfm.types import FactorDims

from oracles import random_orthonormal


def test_distance_identical_and_orthogonal(rng):
    Q = random_orthonormal(rng, 6, 4)
    assert subspace_distance(Q[:, :2], Q[:, :2]) == 0.0
    assert subspace_distance(Q[:, :2], Q[:, 2:]) == 1.0


def test_distance_one_dimensional_angle():
    th = np.pi / 6
    d = subspace_distance(np.array([[1.0], [0.0]]), np.array([[np.cos(th)], [np.sin(th)]]))
    assert abs(d - 0.5) < 1e-12


def test_distance_different_dimensions():
    E = np.eye(4)
    # ||O1'O2||^2 = 1, max(q) = 2 -> sqrt(1/2)
    assert abs(subspace_distance(E[:, :1], E[:, :2]) - np.sqrt(0.5)) < 1e-15
    assert subspace_distance(E[:, :2], E[:, :1]) == subspace_distance(E[:, :1], E[:, :2])


def test_distance_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        subspace_distance(np.array([[2.0], [0.0]]), np.array([[1.0], [0.0]]))
    with pytest.raises(ValueError):
        subspace_distance(np.eye(3)[:, :1], np.eye(4)[:, :1])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_distance_properties(seed, q):
    rng = np.random.default_rng(seed)
    A, B = random_orthonormal(rng, 7, q), random_orthonormal(rng, 7, q)
    d = subspace_distance(A, B)
    assert 0.0 <= d <= 1.0
    assert d == subspace_distance(B, A)
    R = random_orthonormal(rng, q, q)
    assert subspace_distance(A, A @ R) <= 1e-12
    assert abs(subspace_distance(A @ R, B) - d) <= 1e-12


def test_signal_distance_rank_one():
    true = np.zeros((2, 3, 4))
    est = true.copy()
    u, v = np.array([1.0, 2, 2]) / 3, np.array([0.0, 0.6, 0.8, 0])
    est[0] = 5 * np.outer(u, v)
    est[1] = -1 * np.outer(u, v)
    assert abs(signal_distance(est, true) - 3.0 / np.sqrt(12)) < 1e-14


def test_rss_tss_examples(rng):
    X = rng.standard_normal((20, 3, 2))
    assert rss_tss(X, X) == 1.0
    assert abs(rss_tss(X, np.broadcast_to(X.mean(axis=0), X.shape))) < 1e-14
    Xhat = X + 0.3 * rng.standard_normal(X.shape)
    c = rng.standard_normal((3, 2))
    assert rss_tss(X + c, Xhat + c) == pytest.approx(rss_tss(X, Xhat), abs=1e-13)
    with pytest.raises(DegenerateSeriesError, match="degenerate series"):
        rss_tss(np.ones((5, 2, 2)), np.zeros((5, 2, 2)))


def test_rss_tss_pooled(rng):
    X = [rng.standard_normal((10, 2, 2)), rng.standard_normal((10, 3, 2))]
    H = [x + 0.5 for x in X]
    rss = sum(np.sum((x - h) ** 2) for x, h in zip(X, H))
    tss = sum(np.sum((x - x.mean(0)) ** 2) for x in X)
    assert rss_tss(X, H) == pytest.approx(1 - rss / tss, abs=1e-14)


def brute_correlations(arrays):
    M = len(arrays)
    out = np.zeros((M, M))
    for m, n in itertools.product(range(M), repeat=2):
        vals = []
        for j in range(arrays[0].shape[2]):
            for a in range(arrays[m].shape[1]):
                for b in range(arrays[n].shape[1]):
                    if m == n and a == b:
                        continue
                    vals.append(np.corrcoef(arrays[m][:, a, j], arrays[n][:, b, j])[0, 1])
        out[m, n] = np.mean(vals)
    return out


def test_correlation_summary_matches_brute_force(rng):
    arrays = [rng.standard_normal((30, 3, 2)) + rng.standard_normal((30, 1, 1)) for _ in range(3)]
    cs = correlation_summary(arrays)
    np.testing.assert_allclose(cs.matrix, brute_correlations(arrays), atol=1e-12)
    np.testing.assert_array_equal(cs.matrix, cs.matrix.T)
    assert np.all(np.abs(cs.matrix) <= 1)
    assert cs.names == ("g1", "g2", "g3")


def test_correlation_null(rng):
    T = 400
    cs = correlation_summary([rng.standard_normal((T, 5, 3)) for _ in range(3)])
    assert np.all(np.abs(cs.matrix) < 3 / np.sqrt(T))


def test_correlation_shared_and_group_factors(rng):
    T = 300
    f = rng.standard_normal(T)
    shared = [np.outer(f, np.ones(12)).reshape(T, 4, 3) for _ in range(2)]
    cs = correlation_summary(shared)
    np.testing.assert_allclose(cs.matrix, 1.0, atol=1e-12)

    base = [s + rng.standard_normal(s.shape) for s in shared]
    g = rng.standard_normal(T)[:, None, None]
    boosted = [base[0] + 2 * g, base[1]]
    cb = correlation_summary(boosted)
    assert cb.within[0] > cb.between(0)
    assert cb.within[0] > correlation_summary(base).within[0]


def test_correlation_needs_three_points():
    with pytest.raises(ValueError):
        correlation_summary([np.zeros((2, 2, 2))] * 2)


def test_parameter_counts():
    pc = parameter_count(FactorDims(2, 2, ((1, 1),)), [20], 8)
    assert pc.factors_per_group == (5,)
    assert pc.loading_params_per_group == (84,)
    assert pc.vectorized_params_per_group == (800,)
    pc10 = parameter_count(FactorDims(2, 2, ((1, 1),) * 10), [20] * 10, 8)
    assert pc10.model_factors == 4 + 10
    assert pc10.separate_fit_factors == 2 * 10 * 4 + 2 * 10
    assert pc10.total_loading_params == 840
    assert matrix_factor_parameter_count(200, 8, 10, 2) == (20, 2016)
