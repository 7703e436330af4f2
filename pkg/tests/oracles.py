"""Independent reference computations used by the tests.

These use brute force (grids, dense sampling, generic optimisers) and
share no code path with the package routines they check.
"""

import itertools

import numpy as np


def sampled_min_stretch(A, n=100_000, seed=1):
    """``min ||A h||_2`` over ``n`` random unit vectors."""
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((n, A.shape[1]))
    H /= np.linalg.norm(H, axis=1, keepdims=True)
    return float(np.min(np.linalg.norm(H @ A.T, axis=1)))


def grid_points_2d(lo, hi, step):
    g = np.arange(lo, hi + step / 2, step)
    X, Y = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def grid_projection(x, A, b, lo=-2.0, hi=2.0, step=1e-3):
    """Nearest grid point of ``{A z <= b}`` to ``x`` in the plane."""
    Z = grid_points_2d(lo, hi, step)
    Z = Z[np.all(Z @ A.T <= b + 1e-12, axis=1)]
    return Z[np.argmin(np.linalg.norm(Z - x, axis=1))]


def grid_lp_min(c, A, b, lo=-3.0, hi=3.0, step=1e-3):
    Z = grid_points_2d(lo, hi, step)
    Z = Z[np.all(Z @ A.T <= b + 1e-12, axis=1)]
    return float(np.min(Z @ c))


def brute_rayleigh_on_cone(A, G, n=200_000, seed=2):
    """``min <x, A x>`` over sampled unit vectors with ``G x <= 0``."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, A.shape[0]))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    if G is not None and len(G):
        X = X[np.all(X @ np.asarray(G).T <= 0, axis=1)]
    return float(np.min(np.einsum("ij,jk,ik->i", X, A, X)))


def lcp_brute(M, q):
    """All solutions of ``0 <= z _|_ M z + q >= 0`` by complementary-basis enumeration."""
    n = len(q)
    sols = []
    for mask in itertools.product([0, 1], repeat=n):
        idx = [i for i in range(n) if mask[i]]
        z = np.zeros(n)
        if idx:
            try:
                z[idx] = np.linalg.solve(M[np.ix_(idx, idx)], -q[idx])
            except np.linalg.LinAlgError:
                continue
        w = M @ z + q
        if np.all(z >= -1e-10) and np.all(w >= -1e-10):
            sols.append(z)
    return sols


def euler_forward_backward(N, U=(-np.inf, np.inf), iters=200):
    """Independent solver for the scalar test control problem ``phi = ((y-1)^2+u^2)/2``, ``y' = u``.

    Fixed-point iteration on the discrete adjoint/control pair; slow but
    shares nothing with the package's Newton solver.
    """
    h = 1.0 / N
    u = np.zeros(N)
    for _ in range(iters):
        y = np.concatenate([[0.0], np.cumsum(h * u)])
        p = np.zeros(N + 1)
        for i in range(N - 1, -1, -1):
            p[i] = p[i + 1] + h * (y[i] - 1.0)
        u_new = np.clip(-p[:N], U[0], U[1])
        if np.max(np.abs(u_new - u)) < 1e-15:
            u = u_new
            break
        u = 0.5 * u + 0.5 * u_new
    y = np.concatenate([[0.0], np.cumsum(h * u)])
    return y, p, u


def sampled_rayleigh_on_critical_cone(A, B1, B2, n=200_000, seed=4):
    """``min <x, A x>`` over sampled unit ``x`` with ``B1 x = 0`` and ``B2 x <= 0``.

    Samples live in ``null(B1)`` from scipy; a one-dimensional nullspace is
    covered exactly by its two unit vectors.
    """
    from scipy.linalg import null_space

    dim = A.shape[0]
    Z = null_space(np.asarray(B1).reshape(-1, dim)) if B1 is not None and len(B1) else np.eye(dim)
    if Z.shape[1] == 0:
        return np.inf
    if Z.shape[1] == 1:
        X = np.vstack([Z[:, 0], -Z[:, 0]])
    else:
        W = np.random.default_rng(seed).standard_normal((n, Z.shape[1]))
        X = W @ Z.T
    X = X / np.linalg.norm(X, axis=1, keepdims=True)
    if B2 is not None and len(B2):
        X = X[np.all(X @ np.asarray(B2).reshape(-1, dim).T <= 1e-12, axis=1)]
    if not len(X):
        return np.inf
    return float(np.min(np.einsum("ij,jk,ik->i", X, A, X)))
