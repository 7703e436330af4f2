"""Polyhedra in constraint form, their cones, faces, projections and LPs.

The exact routines here are exhaustive enumerations with hard caps.  They
are exponential in the number of constraints and meant for the small
instances that show up when checking regularity conditions by hand.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.optimize import linprog

from .numerics import CapExceeded, matrix_rank, nullspace_basis, range_basis

FEAS_TOL = 1e-10
NORMAL_MEMBERSHIP_TOL = 1e-8

_MAX_PROJ_DIM = 12
_MAX_PROJ_INEQ = 20
_MAX_LP_DIM = 12
_MAX_LP_CONSTRAINTS = 24
_MAX_FACE_INEQ = 20
_MAX_BASES = 250_000


def _mat(A, n):
    if A is None:
        return np.zeros((0, n))
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros((0, n))
    return np.atleast_2d(A).reshape(-1, n)


def _columns(M, n):
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros((n, 0))
    return M.reshape(n, -1)


def _vec(b, k):
    if b is None:
        return np.zeros(k)
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size != k:
        raise ValueError(f"right-hand side has {b.size} entries, expected {k}")
    return b


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """The set ``{x : A x <= b, E x = e}``."""

    A: np.ndarray
    b: np.ndarray
    E: np.ndarray
    e: np.ndarray
    dim: int

    @classmethod
    def from_constraints(cls, dim, A=None, b=None, E=None, e=None):
        A = _mat(A, dim)
        E = _mat(E, dim)
        b = _vec(b, A.shape[0])
        e = _vec(e, E.shape[0])
        for name, arr in (("A", A), ("b", b), ("E", E), ("e", e)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        return cls(A, b, E, e, int(dim))

    @classmethod
    def whole_space(cls, dim):
        return cls.from_constraints(dim)

    @property
    def n_ineq(self):
        return self.A.shape[0]

    @property
    def n_eq(self):
        return self.E.shape[0]

    @property
    def is_cone(self):
        return not np.any(self.b) and not np.any(self.e)

    def contains(self, x, tol=FEAS_TOL):
        x = np.asarray(x, dtype=float)
        if self.n_ineq and np.max(self.A @ x - self.b) > tol:
            return False
        if self.n_eq and np.max(np.abs(self.E @ x - self.e)) > tol:
            return False
        return True

    def active_set(self, x, tol=FEAS_TOL):
        if not self.n_ineq:
            return ()
        return tuple(int(i) for i in np.flatnonzero(np.abs(self.A @ x - self.b) <= tol))

    def to_dict(self):
        return {
            "dim": self.dim,
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "E": self.E.tolist(),
            "e": self.e.tolist(),
        }


def polyhedral_cone(dim, A=None, E=None):
    """The cone ``{x : A x <= 0, E x = 0}``."""
    return Polyhedron.from_constraints(dim, A=A, E=E)


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds differ in length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("bounds must not be NaN")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def free(cls, dim):
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @property
    def dim(self):
        return self.lower.size

    def contains(self, x, tol=FEAS_TOL):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def to_polyhedron(self):
        n = self.dim
        rows, rhs = [], []
        eq_rows, eq_rhs = [], []
        for i in range(n):
            lo, hi = self.lower[i], self.upper[i]
            if np.isfinite(lo) and lo == hi:
                eq_rows.append(np.eye(n)[i])
                eq_rhs.append(lo)
                continue
            if np.isfinite(hi):
                rows.append(np.eye(n)[i])
                rhs.append(hi)
            if np.isfinite(lo):
                rows.append(-np.eye(n)[i])
                rhs.append(-lo)
        return Polyhedron.from_constraints(n, rows or None, rhs or None, eq_rows or None, eq_rhs or None)

    def to_dict(self):
        conv = lambda v: [None if not np.isfinite(t) else float(t) for t in v]
        return {"lower": conv(self.lower), "upper": conv(self.upper)}


@dataclass(frozen=True, eq=False)
class NormalCone:
    """Finitely generated cone ``{G lam + L mu : lam >= 0}``.

    ``generators`` and ``lineality`` hold their directions as columns.
    """

    generators: np.ndarray
    lineality: np.ndarray
    dim: int

    def distance(self, w):
        return cone_distance(self.generators, self.lineality, w)[0]

    def contains(self, w, tol=NORMAL_MEMBERSHIP_TOL):
        return self.distance(w) <= tol

    def is_zero(self):
        return self.generators.shape[1] == 0 and self.lineality.shape[1] == 0


@dataclass(frozen=True)
class Face:
    active_inequalities: tuple
    span_basis: np.ndarray = field(compare=False)

    @property
    def dim(self):
        return self.span_basis.shape[1]


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal" | "unbounded" | "infeasible"
    x: np.ndarray | None
    value: float


def project_box(x, box: Box):
    x = np.asarray(x, dtype=float)
    if x.shape != box.lower.shape:
        raise ValueError("dimension mismatch between point and box")
    return np.minimum(np.maximum(x, box.lower), box.upper)


def _least_distance(x, G, rhs):
    """Nearest point to ``x`` on ``{z : G z = rhs}`` and its multipliers."""
    if G.shape[0] == 0:
        return x.copy(), np.zeros(0)
    lam, *_ = np.linalg.lstsq(G @ G.T, G @ x - rhs, rcond=None)
    return x - G.T @ lam, lam


def project_polyhedron(x, P: Polyhedron):
    """Euclidean projection by exhaustive active-set enumeration."""
    x = np.asarray(x, dtype=float)
    if P.dim > _MAX_PROJ_DIM:
        raise CapExceeded("projection ambient dimension", _MAX_PROJ_DIM, P.dim)
    if P.n_ineq > _MAX_PROJ_INEQ:
        raise CapExceeded("projection inequality count", _MAX_PROJ_INEQ, P.n_ineq)
    if P.contains(x):
        return x.copy()
    eq_rank = matrix_rank(P.E) if P.n_eq else 0
    max_active = min(P.n_ineq, P.dim - eq_rank)
    for size in range(0, max_active + 1):
        for J in itertools.combinations(range(P.n_ineq), size):
            G = np.vstack([P.A[list(J)], P.E])
            if matrix_rank(G) < size + eq_rank:
                continue
            rhs = np.concatenate([P.b[list(J)], P.e])
            z, lam = _least_distance(x, G, rhs)
            scale = 1.0 + np.max(np.abs(rhs), initial=0.0)
            if G.shape[0] and np.max(np.abs(G @ z - rhs)) > 1e-9 * scale:
                continue
            if not P.contains(z, tol=1e-9 * scale):
                continue
            if size and np.min(lam[:size]) < -1e-10:
                continue
            return z
    raise ValueError("polyhedron is empty: no feasible projection candidate")


def cone_distance(G, L, w):
    """Distance from ``w`` to ``{G lam + L mu : lam >= 0}``.

    Exhaustive active-set non-negative least squares: the first support
    whose least-squares fit has positive weights and satisfies the dual
    sign condition is optimal.  Returns ``(distance, lam, mu)``.
    """
    w = np.asarray(w, dtype=float)
    n = w.size
    G = _columns(G, n)
    L = _columns(L, n)
    k = G.shape[1]
    if k > _MAX_PROJ_INEQ:
        raise CapExceeded("cone generator count", _MAX_PROJ_INEQ, k)
    lin_rank = matrix_rank(L) if L.shape[1] else 0
    tol = 1e-10 * (1.0 + np.linalg.norm(w))
    for size in range(0, min(k, n - lin_rank) + 1):
        for S in itertools.combinations(range(k), size):
            B = np.hstack([G[:, list(S)], L])
            if B.shape[1] and matrix_rank(B) < size + lin_rank:
                continue
            if B.shape[1]:
                coef, *_ = np.linalg.lstsq(B, w, rcond=None)
            else:
                coef = np.zeros(0)
            lam_S, mu = coef[:size], coef[size:]
            if size and np.min(lam_S) < -tol:
                continue
            r = w - B @ coef if B.shape[1] else w.copy()
            # optimality: no generator makes an acute angle with the residual
            if k and np.max(G.T @ r) > tol:
                continue
            lam = np.zeros(k)
            lam[list(S)] = np.maximum(lam_S, 0.0)
            return float(np.linalg.norm(r)), lam, mu
    raise RuntimeError("cone distance enumeration found no optimal support")


def normal_cone_at(P: Polyhedron, x):
    """Normal cone of ``P`` at ``x`` in generator form, ``None`` if ``x`` is outside."""
    x = np.asarray(x, dtype=float)
    if not P.contains(x):
        return None
    J = list(P.active_set(x))
    return NormalCone(P.A[J].T.copy(), P.E.T.copy(), P.dim)


def tangent_cone_at(P: Polyhedron, x):
    x = np.asarray(x, dtype=float)
    if not P.contains(x):
        raise ValueError("point is not in the polyhedron")
    J = list(P.active_set(x))
    return polyhedral_cone(P.dim, P.A[J], P.E)


def critical_cone(P: Polyhedron, x, v):
    """``T_P(x)`` intersected with the hyperplane orthogonal to ``v``.

    ``v`` must be a normal vector to ``P`` at ``x``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    N = normal_cone_at(P, x)
    if N is None:
        raise ValueError("point is not in the polyhedron")
    if not N.contains(v):
        raise ValueError("vector is not normal to the polyhedron at the point")
    T = tangent_cone_at(P, x)
    if np.linalg.norm(v) > 0:
        E = np.vstack([T.E, v[None, :]])
    else:
        E = T.E
    return polyhedral_cone(P.dim, T.A, E)


def _implicit_equalities(G, E, candidates):
    """Rows of ``G`` (among ``candidates``) equal to zero on all of ``{G d <= 0, E d = 0}``."""
    candidates = list(candidates)
    if not candidates:
        return set()
    n = G.shape[1]
    k = len(candidates)
    # variables (d, s): max sum(s) s.t. G_c d + s <= 0, G_rest d <= 0, E d = 0, 0 <= s <= 1
    A_ub = np.zeros((G.shape[0], n + k))
    A_ub[:, :n] = G
    for j, i in enumerate(candidates):
        A_ub[i, n + j] = 1.0
    c = np.concatenate([np.zeros(n), -np.ones(k)])
    A_eq = np.hstack([E, np.zeros((E.shape[0], k))]) if E.shape[0] else None
    b_eq = np.zeros(E.shape[0]) if E.shape[0] else None
    bounds = [(None, None)] * n + [(0.0, 1.0)] * k
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(G.shape[0]), A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"face LP failed: {res.message}")
    s = res.x[n:]
    return {i for j, i in enumerate(candidates) if s[j] < 0.5}


def enumerate_faces(K: Polyhedron):
    """All faces of a polyhedral cone, one per realised active pattern."""
    if not K.is_cone:
        raise ValueError("face enumeration expects a cone (zero right-hand sides)")
    if K.n_ineq > _MAX_FACE_INEQ:
        raise CapExceeded("face enumeration inequality count", _MAX_FACE_INEQ, K.n_ineq)
    G, E = K.A, K.E
    m = G.shape[0]
    root = frozenset(_implicit_equalities(G, E, range(m)))
    seen = {root}
    queue = [root]
    while queue:
        J = queue.pop()
        for i in range(m):
            if i in J:
                continue
            forced = J | {i}
            E_f = np.vstack([E, G[sorted(forced)]])
            rest = [r for r in range(m) if r not in forced]
            closure = frozenset(forced | _implicit_equalities(G, E_f, rest))
            if closure not in seen:
                seen.add(closure)
                queue.append(closure)
    faces = []
    for J in seen:
        rows = np.vstack([E, G[sorted(J)]]) if (E.shape[0] or J) else np.zeros((0, K.dim))
        faces.append(Face(tuple(sorted(J)), nullspace_basis(rows) if rows.shape[0] else np.eye(K.dim)))
    faces.sort(key=lambda f: (-f.dim, len(f.active_inequalities), f.active_inequalities))
    return faces


def _lp_highs(c, P: Polyhedron):
    bounds = [(None, None)] * P.dim
    res = linprog(
        c,
        A_ub=P.A if P.n_ineq else None,
        b_ub=P.b if P.n_ineq else None,
        A_eq=P.E if P.n_eq else None,
        b_eq=P.e if P.n_eq else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 0:
        return LPResult("optimal", res.x, float(res.fun))
    if res.status == 3:
        return LPResult("unbounded", None, -np.inf)
    if res.status == 2:
        return LPResult("infeasible", None, np.inf)
    raise RuntimeError(f"linprog failed: {res.message}")


def _lp_enumerate(c, P: Polyhedron):
    """Minimise ``c @ x`` over ``P`` by enumerating basic solutions."""
    n = P.dim
    tol = 1e-9
    # eliminate equalities: x = x0 + Z t
    if P.n_eq:
        x0, *_ = np.linalg.lstsq(P.E, P.e, rcond=None)
        if np.max(np.abs(P.E @ x0 - P.e)) > tol * (1 + np.max(np.abs(P.e))):
            return LPResult("infeasible", None, np.inf)
        Z = nullspace_basis(P.E)
    else:
        x0 = np.zeros(n)
        Z = np.eye(n)
    A = P.A @ Z
    b = P.b - P.A @ x0
    cz = Z.T @ c
    scale_b = 1.0 + np.max(np.abs(b), initial=0.0)
    atol = 1e-12 * max(1.0, float(np.max(np.abs(P.A), initial=0.0)))

    # split off the lineality space of {A t <= b}
    L = nullspace_basis(A, atol=atol) if A.shape[0] else np.eye(Z.shape[1])
    W = range_basis(A, atol=atol) if A.shape[0] else np.zeros((Z.shape[1], 0))
    ray_in_lineality = L.shape[1] > 0 and np.linalg.norm(L.T @ cz) > tol * (1 + np.linalg.norm(cz))
    Aw = A @ W
    cw = W.T @ cz
    d = W.shape[1]

    if d == 0:
        if A.shape[0] and np.max(-b) > tol * scale_b:
            return LPResult("infeasible", None, np.inf)
        if ray_in_lineality:
            return LPResult("unbounded", None, -np.inf)
        return LPResult("optimal", x0.copy(), float(c @ x0))

    k = Aw.shape[0]
    if comb(k, d) > _MAX_BASES:
        raise CapExceeded("LP basis count", _MAX_BASES, comb(k, d))
    best_val, best_s = np.inf, None
    combos = np.array(list(itertools.combinations(range(k), d)), dtype=int)
    mats = Aw[combos]  # (C, d, d)
    conds = np.linalg.cond(mats)
    ok = np.isfinite(conds) & (conds < 1e12)
    if np.any(ok):
        sols = np.linalg.solve(mats[ok], b[combos[ok]][..., None])[..., 0]
        feas = np.all(sols @ Aw.T <= b + tol * scale_b, axis=1)
        if np.any(feas):
            vals = sols[feas] @ cw
            j = int(np.argmin(vals))
            best_val, best_s = float(vals[j]), sols[feas][j]
    if best_s is None:
        return LPResult("infeasible", None, np.inf)
    if ray_in_lineality:
        return LPResult("unbounded", None, -np.inf)

    # extreme rays of the pointed recession cone {Aw r <= 0}
    ray_tol = 1e-9 * (1 + np.linalg.norm(cw))
    if d == 1:
        candidates = [np.array([1.0]), np.array([-1.0])]
    else:
        candidates = []
        for J in itertools.combinations(range(k), d - 1):
            N = nullspace_basis(Aw[list(J)])
            if N.shape[1] == 1:
                candidates.extend([N[:, 0], -N[:, 0]])
    for r in candidates:
        if np.max(Aw @ r) <= 1e-9 and cw @ r < -ray_tol:
            return LPResult("unbounded", None, -np.inf)
    x = x0 + Z @ (W @ best_s)
    return LPResult("optimal", x, float(c @ x))


def lp_solve(c, P: Polyhedron, sense="min", method="enumerate"):
    """Linear programme over a polyhedron.

    ``method="enumerate"`` is the exact vertex-enumeration oracle (capped at
    dimension 12 and 24 constraints); ``method="highs"`` delegates to
    :func:`scipy.optimize.linprog` and is used by internal callers whose
    LPs are larger.
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.size != P.dim:
        raise ValueError("objective length does not match polyhedron dimension")
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    sign = 1.0 if sense == "min" else -1.0
    if method == "enumerate":
        if P.dim > _MAX_LP_DIM:
            raise CapExceeded("LP dimension", _MAX_LP_DIM, P.dim)
        if P.n_ineq + P.n_eq > _MAX_LP_CONSTRAINTS:
            raise CapExceeded("LP constraint count", _MAX_LP_CONSTRAINTS, P.n_ineq + P.n_eq)
        res = _lp_enumerate(sign * c, P)
    elif method == "highs":
        res = _lp_highs(sign * c, P)
    else:
        raise ValueError(f"unknown LP method {method!r}")
    if res.status == "optimal":
        return LPResult("optimal", res.x, sign * res.value)
    if res.status == "unbounded":
        return LPResult("unbounded", None, sign * -np.inf)
    return LPResult("infeasible", None, np.nan)


def cone_is_trivial(E, G, n, tol=1e-9):
    """Whether ``{w : E w = 0, G w <= 0}`` is the zero cone in ``R^n``."""
    E = _mat(E, n)
    G = _mat(G, n)
    Z = nullspace_basis(E) if E.shape[0] else np.eye(n)
    if Z.shape[1] == 0:
        return True
    if G.shape[0] == 0:
        return False
    GZ = G @ Z
    # entries at roundoff level relative to G are exact zeros
    GZ[np.abs(GZ) <= 1e-12 * max(1.0, float(np.max(np.abs(G))))] = 0.0
    if not np.any(GZ) or nullspace_basis(GZ).shape[1] > 0:
        return False
    # pointed: a nonzero member makes some row strictly negative
    m = GZ.shape[0]
    res = linprog(
        np.ones(m) @ GZ,
        A_ub=np.vstack([GZ, -np.ones(m) @ GZ]),
        b_ub=np.concatenate([np.zeros(m), [1.0]]),
        bounds=[(None, None)] * Z.shape[1],
        method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"cone triviality LP failed: {res.message}")
    return -res.fun < 0.5
