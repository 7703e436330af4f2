"""Small dense linear-algebra kernel.

Everything here works on plain ``numpy`` arrays.  Sizes are desk scale
(a few hundred rows at most), so the routines favour deterministic rank
decisions over speed.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

PIVOT_RTOL = 1e-12
RANK_RTOL = 1e-9
SYMMETRY_TOL = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a square system has no unique solution."""


class CapExceeded(ValueError):
    """Raised when an exhaustive routine would exceed its size cap."""

    def __init__(self, cap: str, limit, actual):
        self.cap = cap
        self.limit = limit
        self.actual = actual
        super().__init__(f"cap '{cap}' exceeded: {actual} > {limit}")


def as_matrix(A, name="matrix") -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def as_vector(x, name="vector") -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def solve_linear(A, b) -> np.ndarray:
    """Solve ``A x = b`` by LU with partial pivoting.

    Raises
    ------
    SingularMatrixError
        If a pivot falls below ``1e-12`` times the largest entry of ``A``.
    """
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    n, m = A.shape
    if n != m:
        raise ValueError(f"A must be square, got {A.shape}")
    if b.shape[0] != n:
        raise ValueError(f"dimension mismatch: A is {A.shape}, b has {b.shape[0]}")
    if n == 0:
        return np.zeros(0)
    scale = np.max(np.abs(A))
    if scale == 0.0:
        raise SingularMatrixError("zero matrix")
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrixError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    if np.min(np.abs(np.diag(lu))) <= PIVOT_RTOL * scale:
        raise SingularMatrixError("pivot below relative tolerance")
    x = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    # one step of iterative refinement keeps the residual contract on
    # moderately conditioned systems
    r = b - A @ x
    if np.linalg.norm(r) > 1e-10 * (1.0 + np.linalg.norm(b)):
        x = x + scipy.linalg.lu_solve((lu, piv), r, check_finite=False)
    return x


def _rank_from(s, rtol, atol):
    if s.size == 0 or s[0] <= atol:
        return 0
    return int(np.sum(s > max(rtol * s[0], atol)))


def matrix_rank(A, rtol: float = RANK_RTOL, atol: float = 0.0) -> int:
    """Numerical rank; singular values below ``rtol * s_max`` or ``atol`` count as zero."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    return _rank_from(np.linalg.svd(A, compute_uv=False), rtol, atol)


def nullspace_basis(A, rtol: float = RANK_RTOL, atol: float = 0.0) -> np.ndarray:
    """Orthonormal basis (as columns) of ``{x : A x = 0}``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    if A.shape[0] == 0 or n == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    return vt[_rank_from(s, rtol, atol):].T.copy()


def range_basis(A, rtol: float = RANK_RTOL, atol: float = 0.0) -> np.ndarray:
    """Orthonormal basis of the row space of ``A`` (columns)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.zeros((n, 0))
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    return vt[:_rank_from(s, rtol, atol)].T.copy()


def smallest_singular_value(A):
    """Return ``(sigma_min, right_vector, left_vector)`` of a tall matrix.

    ``A @ right_vector == sigma_min * left_vector`` with both vectors of
    unit Euclidean length.
    """
    A = as_matrix(A, "A")
    rows, cols = A.shape
    if rows < cols:
        raise ValueError(f"need rows >= cols, got {A.shape}")
    u, s, vt = np.linalg.svd(A, full_matrices=True)
    k = cols - 1
    v = vt[k].copy()
    left = u[:, k].copy()
    # deterministic sign: largest component of the right vector positive
    if v[np.argmax(np.abs(v))] < 0:
        v, left = -v, -left
    return float(s[k]), v, left


def symmetric_eigen_extremes(A):
    """Return ``(lambda_min, v_min, lambda_max, v_max)`` of a symmetric matrix."""
    A = as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if np.max(np.abs(A - A.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError("matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    vmin, vmax = V[:, 0].copy(), V[:, -1].copy()
    for v in (vmin, vmax):
        if v[np.argmax(np.abs(v))] < 0:
            v *= -1.0
    return float(w[0]), vmin, float(w[-1]), vmax


def spectral_norm(A) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[0])


def inf_operator_norm(A) -> float:
    """Induced l-infinity norm (maximum absolute row sum)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(A), axis=1)))
