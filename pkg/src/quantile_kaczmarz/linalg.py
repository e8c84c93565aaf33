"""Dense linear algebra and order statistics used by the solvers.

Vectors and matrices are plain float64 numpy arrays; matrices are row-major
with rows playing the role of hyperplane normals.
"""
from __future__ import annotations

import math

import numpy as np

UNIT_TOL = 1e-12

# Products like 0.29 * 100 land a hair below the integer they represent.
_FLOOR_RTOL = 1e-12


def quantile_index(size: int, q: float) -> int:
    """1-based rank of the q-quantile in a multiset of ``size`` elements."""
    return max(1, math.floor(q * size * (1.0 + _FLOOR_RTOL)))


def floor_fraction(fraction: float, size: int) -> int:
    """floor(fraction * size), robust to binary rounding of decimal fractions."""
    return math.floor(fraction * size * (1.0 + _FLOOR_RTOL))


def quantile(values, q: float) -> float:
    """Return the k-th smallest entry of ``values`` with k = max(1, floor(q|S|)).

    >>> quantile([3, 1, 2, 5, 4], 0.5)
    2.0
    """
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("empty multiset")
    if not 0.0 < q <= 1.0:
        raise ValueError("quantile out of range")
    k = quantile_index(arr.size, q)
    return float(np.partition(arr, k - 1)[k - 1])


def _as_vector(x) -> np.ndarray:
    return np.asarray(x, dtype=float).ravel()


def _check_unit(a: np.ndarray) -> None:
    if abs(np.linalg.norm(a) - 1.0) > UNIT_TOL:
        raise ValueError("row must have unit norm")


def _check_dims(x: np.ndarray, a: np.ndarray) -> None:
    if x.shape != a.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {a.shape[0]}")


def project_row(x, a, b: float) -> np.ndarray:
    """Project ``x`` onto the hyperplane {z : <a, z> = b} for a unit row ``a``."""
    x, a = _as_vector(x), _as_vector(a)
    _check_dims(x, a)
    _check_unit(a)
    return x + (b - a @ x) * a


def sign(value: float) -> float:
    """+1 for positive arguments, -1 otherwise (zero included)."""
    return 1.0 if value > 0 else -1.0


def sign_step(x, a, b: float, gamma: float) -> np.ndarray:
    """Signed step of length ``gamma`` toward the hyperplane <a, z> = b."""
    x, a = _as_vector(x), _as_vector(a)
    _check_dims(x, a)
    _check_unit(a)
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    return x - gamma * sign(a @ x - b) * a


def dot(x, y) -> float:
    x, y = _as_vector(x), _as_vector(y)
    _check_dims(x, y)
    return float(x @ y)


def norm(x) -> float:
    return float(np.linalg.norm(_as_vector(x)))


def row(A, i: int) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if not 0 <= i < A.shape[0]:
        raise IndexError(f"row index {i} out of range for {A.shape[0]} rows")
    return A[i].copy()


def frobenius_norm(A) -> float:
    return float(np.sqrt(np.sum(np.square(np.asarray(A, dtype=float)))))


def jacobi_eigh(G, tol: float = 1e-15, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` sorted ascending, with the
    eigenvectors stored as columns.
    """
    G = np.array(G, dtype=float)
    n = G.shape[0]
    if G.ndim != 2 or G.shape[1] != n:
        raise ValueError("matrix must be square")
    V = np.eye(n)
    scale = np.linalg.norm(G)
    if scale == 0.0:
        return np.zeros(n), V
    for _ in range(max_sweeps):
        off = np.linalg.norm(G - np.diag(np.diag(G)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apq = G[p, r]
                if abs(apq) <= 1e-300:
                    continue
                theta = (G[r, r] - G[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                gp, gr = G[:, p].copy(), G[:, r].copy()
                G[:, p] = c * gp - s * gr
                G[:, r] = s * gp + c * gr
                gp, gr = G[p, :].copy(), G[r, :].copy()
                G[p, :] = c * gp - s * gr
                G[r, :] = s * gp + c * gr
                G[p, r] = G[r, p] = 0.0
                vp, vr = V[:, p].copy(), V[:, r].copy()
                V[:, p] = c * vp - s * vr
                V[:, r] = s * vp + c * vr
    w = np.diag(G).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def smallest_singular_pair(A):
    """Smallest singular value of a tall matrix and its right singular vector."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    m, n = A.shape
    if m < n:
        raise ValueError("matrix must be tall")
    w, V = jacobi_eigh(A.T @ A)
    return math.sqrt(max(w[0], 0.0)), V[:, 0]


def smallest_singular_value(A) -> float:
    """sigma_min(A), the square root of the least eigenvalue of A^T A."""
    return smallest_singular_pair(A)[0]


def condition_number(A) -> float:
    """Scaled condition number ||A||_F / sigma_min(A)."""
    smin = smallest_singular_value(A)
    return math.inf if smin == 0.0 else frobenius_norm(A) / smin
