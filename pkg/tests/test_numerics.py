import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mlmfm.errors import ConditioningWarning, NonFiniteError, RankDeficientError
from mlmfm.numerics import fix_signs, ls_solve, sym_eig, thin_qr, varimax, varimax_criterion

from oracles import random_orthonormal

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_sym_eig_diagonal():
    e = sym_eig(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_array_equal(e.values, [3.0, 2.0, 1.0])
    np.testing.assert_array_equal(e.vectors, np.eye(3)[:, [0, 2, 1]])


def test_sym_eig_swap_matrix():
    e = sym_eig(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(e.values, [1.0, -1.0], atol=1e-15)
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(e.vectors[:, 0], [s, s], atol=1e-15)
    # tie in magnitude: lowest index made positive
    np.testing.assert_allclose(e.vectors[:, 1], [s, -s], atol=1e-15)


def test_sym_eig_reconstructs_gram(rng):
    B = rng.standard_normal((6, 6))
    A = B @ B.T
    e = sym_eig(A)
    np.testing.assert_allclose(e.vectors @ np.diag(e.values) @ e.vectors.T, A, atol=1e-8)


def test_sym_eig_rejects_nonfinite():
    with pytest.raises(NonFiniteError, match="non-finite matrix"):
        sym_eig(np.array([[1.0, np.nan], [np.nan, 1.0]]))


@settings(max_examples=50, deadline=None)
@given(arrays(float, (5, 5), elements=finite))
def test_sym_eig_properties(B):
    A = B + B.T
    norm = max(np.linalg.norm(A, 2), 1e-300)
    e = sym_eig(A)
    assert np.all(np.diff(e.values) <= 0)
    assert abs(e.values.sum() - np.trace(A)) <= 1e-8 * max(norm, 1.0)
    np.testing.assert_allclose(e.vectors.T @ e.vectors, np.eye(5), atol=1e-10)
    for lam, v in zip(e.values, e.vectors.T):
        assert np.linalg.norm(A @ v - lam * v) <= 1e-8 * max(norm, 1.0)
    # sign convention
    idx = np.argmax(np.abs(e.vectors), axis=0)
    assert np.all(e.vectors[idx, range(5)] >= 0)


@settings(max_examples=50, deadline=None)
@given(arrays(float, (7, 3), elements=finite))
def test_sym_eig_gram_is_psd(B):
    A = B @ B.T
    e = sym_eig(A)
    assert e.values.min() >= -1e-10 * max(np.linalg.norm(A, 2), 1.0)


def test_fix_signs_tie_goes_to_lowest_index():
    V = np.array([[-1.0], [1.0]]) / np.sqrt(2)
    np.testing.assert_array_equal(fix_signs(V), -V)


def test_thin_qr_fixed_point(rng):
    A = random_orthonormal(rng, 6, 3)
    Q, R = thin_qr(A)
    np.testing.assert_allclose(Q, A, atol=1e-12)
    np.testing.assert_allclose(R, np.eye(3), atol=1e-12)


def test_thin_qr_scaled_axes():
    A = np.array([[2.0, 0.0], [0.0, 0.0], [0.0, 3.0]])
    Q, R = thin_qr(A)
    np.testing.assert_allclose(Q, [[1, 0], [0, 0], [0, 1]], atol=1e-15)
    np.testing.assert_allclose(R, np.diag([2.0, 3.0]), atol=1e-15)


def test_thin_qr_random(rng):
    A = rng.standard_normal((5, 2))
    Q, R = thin_qr(A)
    np.testing.assert_allclose(Q.T @ Q, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(Q @ R, A, atol=1e-10 * np.linalg.norm(A, 2))
    assert np.all(np.diag(R) > 0)
    np.testing.assert_array_equal(np.triu(R), R)


def test_thin_qr_rank_deficient():
    with pytest.raises(RankDeficientError, match="rank deficient loading"):
        thin_qr(np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]))


@settings(max_examples=50, deadline=None)
@given(arrays(float, (6, 3), elements=finite))
def test_thin_qr_idempotent(A):
    try:
        Q, _ = thin_qr(A)
    except RankDeficientError:
        return
    if np.linalg.cond(A) > 1e8:
        return
    Q2, R2 = thin_qr(Q)
    np.testing.assert_allclose(Q2, Q, atol=1e-10)
    np.testing.assert_allclose(R2, np.eye(3), atol=1e-10)


def test_ls_solve_orthonormal(rng):
    A = random_orthonormal(rng, 7, 3)
    Z0 = rng.standard_normal((3, 4))
    np.testing.assert_allclose(ls_solve(A, A @ Z0), Z0, atol=1e-10)


def test_ls_solve_sample_mean():
    Z = ls_solve(np.ones((3, 1)), np.array([[1.0], [2.0], [3.0]]))
    np.testing.assert_allclose(Z, [[2.0]], atol=1e-14)


def test_ls_solve_residual_orthogonal(rng):
    A = rng.standard_normal((20, 4))
    Y = A @ rng.standard_normal((4, 2)) + 0.1 * rng.standard_normal((20, 2))
    Z = ls_solve(A, Y)
    np.testing.assert_allclose(A.T @ (Y - A @ Z), 0.0, atol=1e-8)
    np.testing.assert_allclose(Z, np.linalg.solve(A.T @ A, A.T @ Y), atol=1e-10)


def test_ls_solve_warns_when_ill_conditioned():
    A = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-12], [0.0, 0.0]])
    with pytest.warns(ConditioningWarning):
        Z = ls_solve(A, np.array([[1.0], [1.0], [0.0]]))
    assert np.isfinite(Z).all()


def test_ls_solve_quiet_when_well_conditioned(rng):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ls_solve(rng.standard_normal((6, 2)), rng.standard_normal((6, 1)))


def test_varimax_single_column(rng):
    L = rng.standard_normal((8, 1))
    rot, O = varimax(L)
    np.testing.assert_array_equal(O, np.eye(1))
    np.testing.assert_array_equal(rot, L)


def test_varimax_simple_structure_is_fixed_point():
    L = np.zeros((6, 2))
    L[:3, 0] = [0.9, 0.8, 0.7]
    L[3:, 1] = [0.6, 0.9, 0.8]
    _, O = varimax(L)
    # identity up to column signs and order
    np.testing.assert_allclose(np.abs(O) @ np.abs(O).T, np.eye(2), atol=1e-8)
    np.testing.assert_allclose(np.sort(np.abs(O).ravel()), [0, 0, 1, 1], atol=1e-8)


def test_varimax_increases_criterion(rng):
    L = rng.standard_normal((8, 2))
    rot, O = varimax(L)
    assert varimax_criterion(rot) >= varimax_criterion(L)
    np.testing.assert_allclose(O.T @ O, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(rot, L @ O, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 4))
def test_varimax_keeps_orthonormal_columns(seed, k):
    Q = random_orthonormal(np.random.default_rng(seed), 10, k)
    rot, _ = varimax(Q)
    np.testing.assert_allclose(rot.T @ rot, np.eye(k), atol=1e-10)
    assert varimax_criterion(rot) >= varimax_criterion(Q) - 1e-12
