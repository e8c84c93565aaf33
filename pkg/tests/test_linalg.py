import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from quantile_kaczmarz import linalg
from quantile_kaczmarz.linalg import (
    condition_number,
    dot,
    frobenius_norm,
    jacobi_eigh,
    norm,
    project_row,
    quantile,
    row,
    sign_step,
    smallest_singular_value,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def sorted_quantile(values, q):
    # independent oracle: full sort, then index
    s = sorted(values)
    k = max(1, int(math.floor(q * len(s) + 1e-9)))
    return s[k - 1]


# --- quantile ---------------------------------------------------------------

def test_quantile_examples():
    assert quantile([3, 1, 2, 5, 4], 0.5) == 2
    assert quantile([7], 1.0) == 7
    assert quantile([3, 1, 2, 5, 4], 0.1) == 1


def test_quantile_errors():
    with pytest.raises(ValueError, match="empty multiset"):
        quantile([], 0.5)
    for q in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError, match="quantile out of range"):
            quantile([1.0, 2.0], q)


def test_quantile_decimal_fractions_hit_exact_rank():
    # 0.29 * 100 is 28.999999999999996 in binary floating point
    values = np.arange(1, 101, dtype=float)
    assert quantile(values, 0.29) == 29
    assert quantile(values, 0.7) == 70


@given(st.lists(finite, min_size=1, max_size=1000), st.sampled_from([0.01, 0.25, 0.5, 0.9, 1.0]))
def test_quantile_matches_sort_oracle(values, q):
    assert quantile(values, q) == sorted_quantile(values, q)


@given(st.lists(finite, min_size=1, max_size=200), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_quantile_monotone_in_q(values, q1, q2):
    lo, hi = sorted((q1, q2))
    assert quantile(values, lo) <= quantile(values, hi)


@given(st.integers(0, 2**32 - 1), st.integers(5, 60), st.integers(2, 8), st.sampled_from([0.1, 0.5, 0.9]))
def test_quantile_residual_perturbation_bound(seed, m, n, q):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    gap = abs(quantile(np.abs(A @ x), q) - quantile(np.abs(A @ y), q))
    assert gap <= np.linalg.norm(x - y) + 1e-12


# --- row operations ------------------------------------------------------------

def test_project_row_examples():
    np.testing.assert_array_equal(project_row([0, 0], [1, 0], 2), [2, 0])
    np.testing.assert_array_equal(project_row([2, 5], [1, 0], 2), [2, 5])
    r = 1 / math.sqrt(2)
    np.testing.assert_allclose(project_row([1, 1], [r, r], 0), [0, 0], atol=1e-15)


def test_project_row_checks():
    with pytest.raises(ValueError, match="dimension mismatch"):
        project_row([0, 0, 0], [1, 0], 1)
    with pytest.raises(ValueError, match="unit norm"):
        project_row([0, 0], [2, 0], 1)


unit_rows = st.integers(2, 10).flatmap(
    lambda n: st.tuples(arrays(float, n, elements=st.floats(-10, 10)), arrays(float, n, elements=st.floats(-10, 10)))
)


@given(unit_rows, st.floats(-100, 100))
def test_project_row_properties(pair, b):
    x, a = pair
    if np.linalg.norm(a) < 1e-3:
        return
    a = a / np.linalg.norm(a)
    p = project_row(x, a, b)
    assert abs(a @ p - b) <= 1e-12 * (1 + abs(b)) + 1e-12 * np.linalg.norm(x)
    np.testing.assert_allclose(project_row(p, a, b), p, atol=1e-10)
    # any point on the hyperplane is no closer to x than p is
    z = p + np.roll(a, 1) - (np.roll(a, 1) @ a) * a
    assert np.linalg.norm(p - z) <= np.linalg.norm(x - z) + 1e-9


def test_sign_step_examples():
    np.testing.assert_array_equal(sign_step([1, 0], [1, 0], 0, 0.5), [0.5, 0])
    np.testing.assert_array_equal(sign_step([0, 0], [1, 0], 0, 1), [1, 0])
    np.testing.assert_array_equal(sign_step([3, 4], [0, 1], 1, 0), [3, 4])
    with pytest.raises(ValueError):
        sign_step([0, 0], [1, 0], 0, -1)
    with pytest.raises(ValueError, match="dimension mismatch"):
        sign_step([0, 0], [1, 0, 0], 0, 1)


def test_sign_convention():
    assert linalg.sign(0.0) == -1.0
    assert linalg.sign(-2.0) == -1.0
    assert linalg.sign(1e-300) == 1.0


def test_small_helpers():
    assert dot([1, 2], [3, 4]) == 11
    assert norm([3, 4]) == 5
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(row(A, 1), [3, 4])
    with pytest.raises(IndexError):
        row(A, 2)
    B = np.random.default_rng(0).standard_normal((4, 3))
    B /= np.linalg.norm(B, axis=1, keepdims=True)
    assert abs(frobenius_norm(B) - 2.0) < 1e-10


# --- singular values -------------------------------------------------------------

def test_smallest_singular_value_examples():
    assert abs(smallest_singular_value(np.eye(2)) - 1.0) < 1e-12
    assert abs(smallest_singular_value(np.array([[3.0, 0], [0, 4.0], [0, 0]])) - 3.0) < 1e-12
    with pytest.raises(ValueError, match="matrix must be tall"):
        smallest_singular_value(np.ones((2, 3)))


@given(st.integers(0, 2**32 - 1))
def test_smallest_singular_value_quadratic_oracle(seed):
    A = np.random.default_rng(seed).standard_normal((3, 2))
    G = A.T @ A
    tr, det = G[0, 0] + G[1, 1], G[0, 0] * G[1, 1] - G[0, 1] ** 2
    lam = tr / 2 - math.sqrt(max(tr * tr / 4 - det, 0.0))
    expected = math.sqrt(max(lam, 0.0))
    assert abs(smallest_singular_value(A) - expected) <= 1e-8 * max(expected, 1e-8)


@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_jacobi_matches_reference_eigenvalues(seed, n):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    G = M + M.T
    w, V = jacobi_eigh(G)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(G), atol=1e-10 * (1 + np.abs(G).max()))
    np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-10)
    np.testing.assert_allclose(G @ V, V * w, atol=1e-9 * (1 + np.abs(G).max()))


@given(st.integers(0, 2**32 - 1))
def test_smallest_singular_value_rayleigh_bound(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((30, 6))
    smin = smallest_singular_value(A)
    v = rng.standard_normal((100, 6))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    assert np.all(smin <= np.linalg.norm(A @ v.T, axis=0) + 1e-12)


def test_condition_number():
    A = np.array([[3.0, 0], [0, 4.0], [0, 0]])
    assert abs(condition_number(A) - 5.0 / 3.0) < 1e-12
    assert condition_number(np.array([[1.0, 1.0], [1.0, 1.0]])) > 1e6
