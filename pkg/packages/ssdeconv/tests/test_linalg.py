# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

import numpy as np
import pytest
from ssdeconv.errors import DataError, SingularMatrixError
from ssdeconv.linalg import (
    as_matrix,
    as_points,
    checked_inverse,
    pseudo_inverse,
    smallest_singular_value,
    spectral_norm,
    sup_norm_rows,
)


def test_as_matrix_scalar_and_nested():
    np.testing.assert_array_equal(as_matrix(0.8), [[0.8]])
    np.testing.assert_array_equal(as_matrix([[1, 2], [3, 4]]), [[1.0, 2.0], [3.0, 4.0]])


def test_as_matrix_copies():
    source = np.eye(2)
    m = as_matrix(source)
    m[0, 0] = 5.0
    assert source[0, 0] == 1.0


@pytest.mark.parametrize("value", [[[1.0, 2.0]], [[np.nan]], np.zeros((2, 2, 2))])
def test_as_matrix_rejects(value):
    with pytest.raises(DataError):
        as_matrix(value)


def test_as_points_shapes():
    assert as_points(1.5, 1).shape == (1, 1)
    assert as_points([1.0, 2.0, 3.0], 1).shape == (3, 1)
    assert as_points([1.0, 2.0], 2).shape == (1, 2)
    assert as_points(np.zeros((4, 2)), 2).shape == (4, 2)
    with pytest.raises(DataError):
        as_points(np.zeros((4, 3)), 2)


def test_pseudo_inverse_of_invertible_matrix():
    m = np.array([[2.0, 1.0], [0.5, 3.0]])
    np.testing.assert_allclose(pseudo_inverse(m), np.linalg.inv(m), atol=1e-14)


def test_pseudo_inverse_of_singular_matrix():
    np.testing.assert_allclose(
        pseudo_inverse(np.array([[1.0, 0.0], [0.0, 0.0]])), [[1.0, 0.0], [0.0, 0.0]], atol=1e-15
    )
    np.testing.assert_array_equal(pseudo_inverse(np.zeros((2, 2))), np.zeros((2, 2)))


def test_pseudo_inverse_penrose_conditions():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(3, 1)) @ rng.normal(size=(1, 3))
    p = pseudo_inverse(m)
    np.testing.assert_allclose(m @ p @ m, m, atol=1e-10)
    np.testing.assert_allclose(p @ m @ p, p, atol=1e-10)
    np.testing.assert_allclose((m @ p).T, m @ p, atol=1e-10)
    np.testing.assert_allclose((p @ m).T, p @ m, atol=1e-10)


def test_norms():
    m = np.diag([3.0, 0.5])
    assert spectral_norm(m) == pytest.approx(3.0)
    assert smallest_singular_value(m) == pytest.approx(0.5)
    np.testing.assert_array_equal(sup_norm_rows(np.array([[1.0, -3.0], [0.5, 0.2]])), [3.0, 0.5])


def test_checked_inverse():
    np.testing.assert_allclose(checked_inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))
    with pytest.raises(SingularMatrixError, match="B is singular"):
        checked_inverse(np.array([[1.0, 2.0], [2.0, 4.0]]), "B")
    with pytest.raises(SingularMatrixError):
        checked_inverse(np.diag([1.0, 1e-9]), "A_hat", threshold=1e-8)
