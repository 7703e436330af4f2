"""Generalized equations ``ybar in f(x) + F(x)``.

``f`` is a :class:`SmoothMap`; ``F`` is one of the structured set parts
below.  The module also provides the natural-map reformulation for box and
KKT cones and an exact solver for the affine subproblems that Newton-type
methods generate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .numerics import CapExceeded, as_vector, nullspace_basis
from .polyhedral import Box, Polyhedron, cone_distance, normal_cone_at, project_box

ACTIVE_TOL = 1e-10
TIE_TOL = 1e-12
_MAX_AVI_COORDS = 20


class SmoothMap:
    """A vector function with a Jacobian oracle.

    When ``jac`` is omitted the Jacobian is formed by central differences
    with step ``1e-6 * (1 + ||x||)``.
    """

    def __init__(self, fun, dim_in, dim_out, jac=None, name=None):
        self.fun = fun
        self.jac = jac
        self.dim_in = int(dim_in)
        self.dim_out = int(dim_out)
        self.name = name or getattr(fun, "__name__", "smooth map")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.atleast_1d(np.asarray(self.fun(x), dtype=float)).reshape(self.dim_out)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        if self.jac is not None:
            J = self.jac(x)
            if sp.issparse(J):
                return J
            return np.asarray(J, dtype=float).reshape(self.dim_out, self.dim_in)
        return central_difference_jacobian(self, x)

    @classmethod
    def linear(cls, M, c=None, name="affine"):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        c = np.zeros(M.shape[0]) if c is None else np.asarray(c, dtype=float).reshape(-1)
        return cls(lambda x: M @ x + c, M.shape[1], M.shape[0], jac=lambda x: M, name=name)

    @classmethod
    def zero(cls, dim_in, dim_out=None):
        dim_out = dim_in if dim_out is None else dim_out
        return cls.linear(np.zeros((dim_out, dim_in)), name="zero")

    @classmethod
    def identity(cls, dim):
        return cls.linear(np.eye(dim), name="identity")

    def __add__(self, other):
        if not isinstance(other, SmoothMap):
            return NotImplemented
        if (self.dim_in, self.dim_out) != (other.dim_in, other.dim_out):
            raise ValueError("cannot add maps with different shapes")
        return SmoothMap(
            lambda x: self(x) + other(x),
            self.dim_in,
            self.dim_out,
            jac=lambda x: self.jacobian(x) + other.jacobian(x),
            name=f"{self.name}+{other.name}",
        )


def central_difference_jacobian(fmap, x):
    x = np.asarray(x, dtype=float)
    h = 1e-6 * (1.0 + np.linalg.norm(x))
    cols = []
    for j in range(x.size):
        step = np.zeros_like(x)
        step[j] = h
        cols.append((fmap(x + step) - fmap(x - step)) / (2 * h))
    return np.column_stack(cols) if cols else np.zeros((fmap.dim_out, 0))


# --- set parts -------------------------------------------------------------


class SetPart:
    """Set-valued part ``F`` of a generalized equation."""

    def distance(self, x, w):
        """``d(w, F(x))``; ``inf`` when ``F(x)`` is empty."""
        raise NotImplementedError

    def contains(self, x, w, tol=1e-8):
        return self.distance(x, w) <= tol


@dataclass(frozen=True, eq=False)
class ZeroMap(SetPart):
    def distance(self, x, w):
        return float(np.linalg.norm(w))


def _box_normal_distance(box: Box, x, w):
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    lo, hi = box.lower, box.upper
    if np.any(x < lo - ACTIVE_TOL) or np.any(x > hi + ACTIVE_TOL):
        return np.inf
    at_lo = np.abs(x - lo) <= ACTIVE_TOL
    at_hi = np.abs(x - hi) <= ACTIVE_TOL
    d = np.abs(w)
    only_lo = at_lo & ~at_hi
    only_hi = at_hi & ~at_lo
    d[only_lo] = np.maximum(w[only_lo], 0.0)  # N = (-inf, 0]
    d[only_hi] = np.maximum(-w[only_hi], 0.0)  # N = [0, inf)
    d[at_lo & at_hi] = 0.0
    return float(np.linalg.norm(d))


@dataclass(frozen=True, eq=False)
class BoxNormalCone(SetPart):
    box: Box

    def distance(self, x, w):
        return _box_normal_distance(self.box, x, w)

    def as_box(self, dim=None):
        return self.box


@dataclass(frozen=True, eq=False)
class KktCone(SetPart):
    """Normal cone to ``R^n x R^s x R_+^(m-s)``; ``n`` is inferred from the point."""

    s: int
    m: int

    def __post_init__(self):
        if not 0 <= self.s <= self.m:
            raise ValueError("need 0 <= s <= m")

    def as_box(self, dim):
        n = dim - self.m
        if n < 0:
            raise ValueError("dimension smaller than multiplier count")
        lower = np.concatenate([np.full(n + self.s, -np.inf), np.zeros(self.m - self.s)])
        return Box(lower, np.full(dim, np.inf))

    def distance(self, x, w):
        return _box_normal_distance(self.as_box(np.size(x)), x, w)


@dataclass(frozen=True, eq=False)
class PolyhedralNormalCone(SetPart):
    polyhedron: Polyhedron

    def distance(self, x, w):
        N = normal_cone_at(self.polyhedron, x)
        if N is None:
            return np.inf
        return cone_distance(N.generators, N.lineality, w)[0]


@dataclass(frozen=True, eq=False)
class NonnegativeOrthant(SetPart):
    """Constant set ``F(x) = R_+^m``; turns ``f(x) <= 0`` into ``0 in f(x) + F(x)``."""

    m: int

    def distance(self, x, w):
        return float(np.linalg.norm(np.minimum(w, 0.0)))


@dataclass(frozen=True, eq=False)
class ExplicitGraph(SetPart):
    """A finite graph given as ``(x, y)`` pairs."""

    points: tuple

    def __post_init__(self):
        pts = tuple((as_vector(x), as_vector(y)) for x, y in self.points)
        if not pts:
            raise ValueError("explicit graph needs at least one point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_X", np.array([px for px, _ in pts]))

    def values_at(self, x, tol=1e-12):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        hit = np.flatnonzero(np.max(np.abs(self._X - x), axis=1) <= tol)
        return [self.points[i][1] for i in hit]

    def distance(self, x, w):
        vals = self.values_at(x)
        if not vals:
            return np.inf
        return float(min(np.linalg.norm(w - y) for y in vals))

    def domain_points(self):
        return self._X.copy()


@dataclass(frozen=True, eq=False)
class FiniteSelection(SetPart):
    """``F(x) = {f_1(x), ..., f_k(x)}``."""

    maps: tuple

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))

    def values_at(self, x):
        return [fi(x) for fi in self.maps]

    def distance(self, x, w):
        return float(min(np.linalg.norm(w - fi(x)) for fi in self.maps))


def box_of(set_part: SetPart, dim: int) -> Box:
    if isinstance(set_part, (BoxNormalCone, KktCone)):
        return set_part.as_box(dim)
    if isinstance(set_part, ZeroMap):
        # N_{R^n} = {0}
        return Box.free(dim)
    raise TypeError(f"operation needs a box or KKT cone, got {type(set_part).__name__}")


# --- the generalized equation ------------------------------------------------


@dataclass(frozen=True, eq=False)
class GeneralizedEquation:
    """``reference_value in smooth(x) + set_part(x)``.

    When a reference point is given it must solve the inclusion to within
    ``1e-8``.
    """

    smooth: SmoothMap
    set_part: SetPart
    reference_point: np.ndarray | None = None
    reference_value: np.ndarray | None = None
    check: bool = True

    def __post_init__(self):
        ybar = (
            np.zeros(self.smooth.dim_out)
            if self.reference_value is None
            else as_vector(self.reference_value, "reference_value")
        )
        object.__setattr__(self, "reference_value", ybar)
        if self.reference_point is not None:
            xbar = as_vector(self.reference_point, "reference_point")
            object.__setattr__(self, "reference_point", xbar)
            if self.check:
                r = residual_distance(self, xbar)
                if not r <= 1e-8:
                    raise ValueError(f"reference point does not solve the inclusion (residual {r:.3g})")

    @property
    def dim(self):
        return self.smooth.dim_in

    def with_reference(self, xbar, ybar=None):
        return GeneralizedEquation(
            self.smooth, self.set_part, xbar, self.reference_value if ybar is None else ybar
        )


def residual_distance(ge: GeneralizedEquation, x, target=None) -> float:
    """``d(target, f(x) + F(x))`` with ``target`` defaulting to the reference value."""
    x = np.asarray(x, dtype=float)
    ybar = ge.reference_value if target is None else np.asarray(target, dtype=float)
    return ge.set_part.distance(x, ybar - ge.smooth(x))


def natural_map(ge: GeneralizedEquation, x, target=None):
    """``x - P_C(x - (f(x) - target))`` for box and KKT cones."""
    x = np.asarray(x, dtype=float)
    box = box_of(ge.set_part, x.size)
    ybar = ge.reference_value if target is None else np.asarray(target, dtype=float)
    return x - project_box(x - (ge.smooth(x) - ybar), box)


def b_jacobian_natural_map(ge: GeneralizedEquation, x, target=None):
    """An element of the B-subdifferential of the natural map.

    Rows where ``z = x - f(x)`` lies strictly outside the box become unit
    rows; interior rows and ties keep the Jacobian of ``f``.
    """
    x = np.asarray(x, dtype=float)
    box = box_of(ge.set_part, x.size)
    ybar = ge.reference_value if target is None else np.asarray(target, dtype=float)
    z = x - (ge.smooth(x) - ybar)
    outside = (z < box.lower - TIE_TOL) | (z > box.upper + TIE_TOL)
    J = ge.smooth.jacobian(x)
    keep = (~outside).astype(float)
    if sp.issparse(J):
        return (sp.diags(keep) @ J + sp.diags(1.0 - keep)).tocsc()
    return keep[:, None] * J + np.diag(1.0 - keep)


def avi_solve(M, q, C: SetPart, nearest_to, dim=None):
    """Solve ``0 in q + M z + N_C(z)`` exactly by pattern enumeration.

    Every bounded coordinate is tried at its lower bound, free, or at its
    upper bound.  Among all valid solutions the one nearest to
    ``nearest_to`` is returned; ``None`` when no pattern yields a solution.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    q = np.asarray(q, dtype=float).reshape(-1)
    n = q.size
    box = box_of(C, n if dim is None else dim)
    near = np.asarray(nearest_to, dtype=float)
    lo, hi = box.lower, box.upper
    bounded = [i for i in range(n) if np.isfinite(lo[i]) or np.isfinite(hi[i])]
    if len(bounded) > _MAX_AVI_COORDS:
        raise CapExceeded("AVI bound/sign coordinates", _MAX_AVI_COORDS, len(bounded))
    choices = []
    for i in bounded:
        opts = []
        if np.isfinite(lo[i]):
            opts.append("lo")
        if lo[i] < hi[i]:
            opts.append("free")
        if np.isfinite(hi[i]) and hi[i] > lo[i]:
            opts.append("hi")
        choices.append(opts)
    scale = 1.0 + np.max(np.abs(q), initial=0.0) + np.max(np.abs(M), initial=0.0)
    best, best_d = None, np.inf
    for pattern in itertools.product(*choices):
        z = np.zeros(n)
        fixed = np.zeros(n, dtype=bool)
        for i, p in zip(bounded, pattern):
            if p == "lo":
                z[i], fixed[i] = lo[i], True
            elif p == "hi":
                z[i], fixed[i] = hi[i], True
        F = np.flatnonzero(~fixed)
        B = np.flatnonzero(fixed)
        if F.size:
            rhs = -(q[F] + M[np.ix_(F, B)] @ z[B])
            MFF = M[np.ix_(F, F)]
            zF, *_ = np.linalg.lstsq(MFF, rhs, rcond=None)
            if np.max(np.abs(MFF @ zF - rhs), initial=0.0) > 1e-10 * scale:
                continue
            # singular block: move to the solution nearest the anchor
            N = nullspace_basis(MFF)
            if N.shape[1]:
                zF = zF + N @ (N.T @ (near[F] - zF))
            z[F] = zF
        w = q + M @ z
        if np.any(z < lo - ACTIVE_TOL) or np.any(z > hi + ACTIVE_TOL):
            continue
        ok = True
        for i, p in zip(bounded, pattern):
            if p == "lo" and lo[i] < hi[i] and w[i] < -1e-10 * scale:
                ok = False
            if p == "hi" and w[i] > 1e-10 * scale:
                ok = False
        if not ok:
            continue
        d = np.linalg.norm(z - near)
        if d < best_d - 1e-15:
            best, best_d = z, d
    return best
