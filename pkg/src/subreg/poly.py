"""Sparse multivariate polynomials with exact derivatives.

Used to read problems from JSON coefficient tables.
"""

from __future__ import annotations

import numpy as np


class Polynomial:
    """``sum_k c_k prod_j x_j^{e_kj}`` with nonnegative integer exponents.

    Parameters
    ----------
    dim : int
        Number of variables.
    terms : iterable of (coef, exponents)
        ``exponents`` has length ``dim``.
    """

    def __init__(self, dim, terms):
        self.dim = int(dim)
        terms = list(terms)
        self.coefs = np.array([float(c) for c, _ in terms], dtype=float)
        self.exps = np.array([list(e) for _, e in terms], dtype=int).reshape(len(terms), self.dim)
        if np.any(self.exps < 0):
            raise ValueError("exponents must be nonnegative")
        if self.exps.shape[1] != self.dim:
            raise ValueError(f"exponent tuples must have length {self.dim}")
        if not np.all(np.isfinite(self.coefs)):
            raise ValueError("coefficients must be finite")

    @classmethod
    def from_json(cls, dim, table):
        """``table`` is ``[[coef, [e_1, ..., e_dim]], ...]``."""
        return cls(dim, [(c, e) for c, e in table])

    def to_json(self):
        return [[float(c), [int(v) for v in e]] for c, e in zip(self.coefs, self.exps)]

    def _check(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise ValueError(f"expected {self.dim} variables, got {x.size}")
        return x

    def __call__(self, x):
        x = self._check(x)
        if not self.coefs.size:
            return 0.0
        return float(self.coefs @ np.prod(x[None, :] ** self.exps, axis=1))

    def _dpow(self, x, e):
        # e * x^(e-1), zero where e == 0
        safe = np.where(e > 0, e - 1, 0)
        return np.where(e > 0, e * x[None, :] ** safe, 0.0)

    def gradient(self, x):
        x = self._check(x)
        g = np.zeros(self.dim)
        if not self.coefs.size:
            return g
        P = x[None, :] ** self.exps
        D = self._dpow(x, self.exps)
        for j in range(self.dim):
            Q = P.copy()
            Q[:, j] = D[:, j]
            g[j] = self.coefs @ np.prod(Q, axis=1)
        return g

    def hessian(self, x):
        x = self._check(x)
        n = self.dim
        H = np.zeros((n, n))
        if not self.coefs.size:
            return H
        P = x[None, :] ** self.exps
        D = self._dpow(x, self.exps)
        e2 = self.exps
        safe2 = np.where(e2 > 1, e2 - 2, 0)
        D2 = np.where(e2 > 1, e2 * (e2 - 1) * x[None, :] ** safe2, 0.0)
        for i in range(n):
            for j in range(i, n):
                Q = P.copy()
                if i == j:
                    Q[:, i] = D2[:, i]
                else:
                    Q[:, i] = D[:, i]
                    Q[:, j] = D[:, j]
                H[i, j] = H[j, i] = self.coefs @ np.prod(Q, axis=1)
        return H


def finite_difference_gradient(fun, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros(x.size)
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def finite_difference_jacobian(fun, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = h
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h))
    return np.column_stack(cols) if cols else np.zeros((0, 0))
