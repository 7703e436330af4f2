"""KKT analysis of smooth nonlinear programs.

Problems have the form

    minimize g0(x)  subject to  g_i(x) = 0 (i < s),  g_i(x) <= 0 (s <= i < m)

with multipliers ``y`` and Lagrangian ``L = g0 + sum y_i g_i``.  Indices
are zero-based in code.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geq import GeneralizedEquation, KktCone, SmoothMap
from .numerics import CapExceeded, as_vector
from .poly import Polynomial, finite_difference_gradient, finite_difference_jacobian
from .polyhedral import Polyhedron, cone_is_trivial, polyhedral_cone
from .regularity import _nonzero_in_block, radius_variational

FD_TOL = 1e-4
SOSC_TOL = 1e-9
_MAX_SMF_M = 20
_MAX_I2 = 16


@dataclass(frozen=True)
class ScalarOracle:
    value: object
    grad: object
    hess: object

    @classmethod
    def polynomial(cls, p: Polynomial):
        return cls(p, p.gradient, p.hessian)


class NlpProblem:
    """Objective and constraint oracles with a finite-difference self-check.

    Parameters
    ----------
    n : int
        Number of variables.
    s : int
        Number of equality constraints; they come first.
    objective : ScalarOracle
    constraints : list of ScalarOracle
    check_point : array_like, optional
        Where the derivative oracles are compared with finite differences.
    """

    def __init__(self, n, s, objective, constraints, check_point=None, name=None):
        self.n = int(n)
        self.m = len(constraints)
        self.s = int(s)
        if not 0 <= self.s <= self.m:
            raise ValueError("need 0 <= s <= m")
        self.objective = objective
        self.constraints = list(constraints)
        self.name = name or "nlp"
        x0 = np.linspace(0.1, 0.3, self.n) if check_point is None else as_vector(check_point)
        self._self_check(x0)

    @classmethod
    def from_polynomials(cls, n, s, objective, constraints, **kw):
        return cls(n, s, ScalarOracle.polynomial(objective),
                   [ScalarOracle.polynomial(p) for p in constraints], **kw)

    def _self_check(self, x):
        for k, o in enumerate([self.objective] + self.constraints):
            g = np.asarray(o.grad(x), dtype=float)
            H = np.asarray(o.hess(x), dtype=float)
            if g.shape != (self.n,) or H.shape != (self.n, self.n):
                raise ValueError(f"oracle {k} has inconsistent dimensions")
            g_fd = finite_difference_gradient(o.value, x)
            H_fd = finite_difference_jacobian(o.grad, x)
            scale = 1.0 + np.max(np.abs(g)) + np.max(np.abs(H))
            if np.max(np.abs(g - g_fd)) > FD_TOL * scale or np.max(np.abs(H - H_fd)) > FD_TOL * scale:
                raise ValueError(f"oracle {k} derivatives disagree with finite differences")

    def g(self, x):
        return np.array([c.value(x) for c in self.constraints], dtype=float)

    def jac(self, x):
        if not self.m:
            return np.zeros((0, self.n))
        return np.array([c.grad(x) for c in self.constraints], dtype=float)

    def lagrangian_grad(self, x, y):
        return np.asarray(self.objective.grad(x), dtype=float) + self.jac(x).T @ np.asarray(y, dtype=float)

    def lagrangian_hess(self, x, y):
        H = np.array(self.objective.hess(x), dtype=float)
        for yi, c in zip(y, self.constraints):
            if yi != 0.0:
                H = H + yi * np.asarray(c.hess(x), dtype=float)
        return H


@dataclass(frozen=True)
class KktPoint:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", as_vector(self.x, "x"))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).reshape(-1))

    def validate(self, prob: NlpProblem, tol=1e-8):
        if self.x.size != prob.n or self.y.size != prob.m:
            raise ValueError("KKT point dimensions do not match the problem")
        r = kkt_residual(prob, self.x, self.y)
        if r > tol:
            raise ValueError(f"not a KKT point: residual {r:.3g}")
        return self


@dataclass(frozen=True)
class IndexSets:
    I1: tuple
    I2: tuple
    I3: tuple


@dataclass
class CriticalConeData:
    A_hess: np.ndarray
    B_full: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    K: Polyhedron


def kkt_residual(prob: NlpProblem, x, y) -> float:
    """``||grad_x L||_inf`` plus the worst per-constraint violation."""
    x = as_vector(x, "x")
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != prob.n or y.size != prob.m:
        raise ValueError("dimension mismatch")
    r = float(np.max(np.abs(prob.lagrangian_grad(x, y)), initial=0.0))
    g = prob.g(x)
    viol = 0.0
    for i in range(prob.m):
        if i < prob.s:
            viol = max(viol, abs(g[i]))
        else:
            viol = max(viol, abs(min(y[i], -g[i])) + max(-y[i], 0.0))
    return r + viol


def classify_indices(prob: NlpProblem, pt: KktPoint, tol=1e-8) -> IndexSets:
    """Split constraints into active-positive, active-zero and inactive indices.

    Ties (``|g_i| <= tol`` and ``y_i <= tol``) go to ``I2``.
    """
    g = prob.g(pt.x)
    I1, I2, I3 = [], [], []
    for i in range(prob.m):
        if i < prob.s:
            I1.append(i)
        elif abs(g[i]) <= tol:
            (I1 if pt.y[i] > tol else I2).append(i)
        else:
            I3.append(i)
    return IndexSets(tuple(I1), tuple(I2), tuple(I3))


def critical_cone_data(prob: NlpProblem, pt: KktPoint, sets: IndexSets) -> CriticalConeData:
    A = prob.lagrangian_hess(pt.x, pt.y)
    B = prob.jac(pt.x)
    B1, B2 = B[list(sets.I1)], B[list(sets.I2)]
    return CriticalConeData(A, B, B1, B2, polyhedral_cone(prob.n, A=B2, E=B1))


def strict_mfcq_check(cd: CriticalConeData, sets: IndexSets, literal=False) -> bool:
    """No nonzero ``y`` with ``sum y_i grad g_i = 0``, ``y_I2 >= 0``, ``y_I3 = 0``.

    With ``literal=True`` the ``I3`` components are left free instead.
    """
    m = cd.B_full.shape[0]
    if m > _MAX_SMF_M:
        raise CapExceeded("constraint count for strict MFCQ", _MAX_SMF_M, m)
    idx = list(sets.I1) + list(sets.I2) + (list(sets.I3) if literal else [])
    if not idx:
        return True
    k = len(idx)
    E = cd.B_full[idx].T
    G = np.zeros((len(sets.I2), k))
    for r, i in enumerate(sets.I2):
        G[r, idx.index(i)] = -1.0
    return cone_is_trivial(E, G, k)


def sosc_sigma(cd: CriticalConeData) -> float:
    """Minimum of ``<x, A x>`` on the unit sphere of the critical cone (``+inf`` if ``K = {0}``)."""
    n = cd.A_hess.shape[0]
    if cone_is_trivial(cd.K.E, cd.K.A, n):
        return np.inf
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sigma, _, _ = radius_variational(cd.A_hess, cd.K)
    return sigma


def kkt_generalized_equation(prob: NlpProblem, pt: KktPoint | None = None) -> GeneralizedEquation:
    """``0 in (grad_x L(x, y), -g(x)) + N(x, y)`` on ``R^n x R^s x R_+^(m-s)``."""
    n, m = prob.n, prob.m

    def fun(z):
        x, y = z[:n], z[n:]
        return np.concatenate([prob.lagrangian_grad(x, y), -prob.g(x)])

    def jac(z):
        x, y = z[:n], z[n:]
        B = prob.jac(x)
        return np.block([[prob.lagrangian_hess(x, y), B.T], [-B, np.zeros((m, m))]])

    smooth = SmoothMap(fun, n + m, n + m, jac=jac, name=f"kkt[{prob.name}]")
    ref = None if pt is None else np.concatenate([pt.x, pt.y])
    return GeneralizedEquation(smooth, KktCone(prob.s, m), reference_point=ref)


def linearized_kkt(prob: NlpProblem, pt: KktPoint):
    """Affine part and set part of the linearized KKT mapping at ``pt``.

    Returns ``((M, c), KktCone)`` with ``M = [[A, B^T], [-B, 0]]`` and
    ``c`` chosen so that ``M z + c`` equals ``(0, -g(xbar))`` at the point.
    """
    n, m = prob.n, prob.m
    A = prob.lagrangian_hess(pt.x, pt.y)
    B = prob.jac(pt.x)
    M = np.block([[A, B.T], [-B, np.zeros((m, m))]])
    zbar = np.concatenate([pt.x, pt.y])
    at_ref = np.concatenate([np.zeros(n), -prob.g(pt.x)])
    return (M, at_ref - M @ zbar), KktCone(prob.s, m)


def homogeneous_vi_unique_zero(cd: CriticalConeData, sets: IndexSets) -> bool:
    """Whether ``(x, y) = 0`` is the only solution of the homogeneous system.

    ``A x + B^T y = 0``, ``B1 x = 0``, ``B2 x`` in the normal cone of the
    nonnegative orthant at ``y_I2``, and ``y_I3 = 0``.  Decided by enumerating
    the complementarity patterns of ``I2``.
    """
    I1, I2 = list(sets.I1), list(sets.I2)
    if len(I2) > _MAX_I2:
        raise CapExceeded("I2 size", _MAX_I2, len(I2))
    n = cd.A_hess.shape[0]
    k1, k2 = len(I1), len(I2)
    B = cd.B_full
    nv = n + k1 + k2
    for pat in itertools.product((True, False), repeat=k2):
        act = [r for r in range(k2) if pat[r]]
        ina = [r for r in range(k2) if not pat[r]]
        # variables (x, y_I1, y_I2)
        rows = [np.hstack([cd.A_hess, B[I1].T, B[I2].T])]
        if k1:
            rows.append(np.hstack([cd.B1, np.zeros((k1, k1 + k2))]))
        for r in act:
            rows.append(np.concatenate([cd.B2[r], np.zeros(k1 + k2)])[None, :])
        for r in ina:
            e = np.zeros(nv)
            e[n + k1 + r] = 1.0
            rows.append(e[None, :])
        A_eq = np.vstack(rows)
        A_ub = np.array([np.concatenate([cd.B2[r], np.zeros(k1 + k2)]) for r in ina]).reshape(len(ina), nv)
        bounds = [(None, None)] * (n + k1) + [(0, None) if pat[r] else (None, None) for r in range(k2)]
        if _nonzero_in_block(A_eq, A_ub, bounds, list(range(nv))):
            return False
    return True


def _feasible_samples(prob, x, radius, n_samples, rng):
    """Random points near ``x`` pulled back onto the equality constraints."""
    out = []
    for _ in range(n_samples):
        d = rng.standard_normal(prob.n)
        z = x + radius * rng.uniform(0.05, 1.0) * d / np.linalg.norm(d)
        for _ in range(20):
            if not prob.s:
                break
            ge = prob.g(z)[: prob.s]
            if np.max(np.abs(ge)) < 1e-12:
                break
            J = prob.jac(z)[: prob.s]
            z = z - np.linalg.lstsq(J, ge, rcond=None)[0]
        g = prob.g(z)
        if prob.s and np.max(np.abs(g[: prob.s])) > 1e-10:
            continue
        if np.any(g[prob.s:] > 1e-12):
            continue
        if np.linalg.norm(z - x) > 0:
            out.append(z)
    return out


def quadratic_growth_witness(prob, pt, beta, radius=1e-2, n_samples=400, seed=0):
    """Sampled check of ``g0(x) >= g0(xbar) + beta ||x - xbar||^2`` on feasible points."""
    rng = np.random.default_rng(seed)
    f0 = prob.objective.value(pt.x)
    pts = _feasible_samples(prob, pt.x, radius, n_samples, rng)
    ok = all(prob.objective.value(z) >= f0 + beta * np.dot(z - pt.x, z - pt.x) - 1e-14 for z in pts)
    return bool(ok), len(pts)


def theorem_nlp_equivalence(prob: NlpProblem, pt: KktPoint, tol=1e-8, seed=0):
    """Compare strict MFCQ plus SOSC with strong subregularity of the KKT map.

    ``consistent`` is ``(smf and sosc) == (subreg and local_min)``.
    """
    pt.validate(prob)
    sets = classify_indices(prob, pt, tol)
    cd = critical_cone_data(prob, pt, sets)
    smf = strict_mfcq_check(cd, sets)
    smf_literal = strict_mfcq_check(cd, sets, literal=True)
    sigma = sosc_sigma(cd)
    sosc = bool(sigma > SOSC_TOL)
    subreg = homogeneous_vi_unique_zero(cd, sets)
    beta = (sigma / 4.0 if np.isfinite(sigma) else 1.0) if sosc else 1e-8
    local_min, n_feasible = quadratic_growth_witness(prob, pt, beta, seed=seed)
    return {
        "smf": bool(smf),
        "smf_literal": bool(smf_literal),
        "sosc": sosc,
        "sigma": float(sigma),
        "subreg": bool(subreg),
        "local_min": local_min,
        "consistent": bool((smf and sosc) == (subreg and local_min)),
        "index_sets": {"I1": list(sets.I1), "I2": list(sets.I2), "I3": list(sets.I3)},
        "growth_beta": float(beta),
        "growth_samples": n_feasible,
    }


# --- random instances -----------------------------------------------------------


@dataclass
class RandomNlp:
    problem: NlpProblem
    point: KktPoint
    sets: IndexSets = field(default=None)


def random_nlp(rng, n_max=4, m_max=5):
    """Small NLP with a known KKT point and a Hessian positive semidefinite on ``K``.

    Constraints are affine, ``g_i(x) = b_i^T (x - xbar) + c_i``.  Some
    instances repeat a gradient to break strict MFCQ; Hessians have random
    rank so that SOSC may fail.
    """
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(0, m_max + 1))
    s = int(rng.integers(0, min(m, n) + 1)) if m else 0
    xbar = np.round(rng.uniform(-1, 1, n), 3)
    Bm = rng.integers(-2, 3, size=(m, n)).astype(float)
    for i in range(m):
        if not np.any(Bm[i]):
            Bm[i, rng.integers(n)] = 1.0
    if m >= 2 and rng.uniform() < 0.3:
        i, j = rng.choice(m, 2, replace=False)
        Bm[j] = Bm[i] * rng.choice([1.0, 2.0, -1.0])
    kind = rng.choice(["I1", "I2", "I3"], size=m)
    c = np.zeros(m)
    y = np.zeros(m)
    for i in range(m):
        if i < s:
            y[i] = rng.choice([-1.0, 1.0]) * rng.integers(1, 4)
        elif kind[i] == "I1":
            y[i] = float(rng.integers(1, 4))
        elif kind[i] == "I3":
            c[i] = -float(rng.integers(1, 4))
    rank = int(rng.integers(0, n + 1))
    W = rng.integers(-2, 3, size=(rank, n)).astype(float)
    H0 = W.T @ W
    # add curvature that the critical cone never sees
    active_eq = [i for i in range(m) if i < s or (kind[i] == "I1")]
    if active_eq and rng.uniform() < 0.5:
        B1 = Bm[active_eq]
        H0 = H0 - float(rng.integers(1, 3)) * B1.T @ B1
    q = -Bm.T @ y
    obj = ScalarOracle(
        lambda x, H0=H0, q=q: float(0.5 * (x - xbar) @ H0 @ (x - xbar) + q @ (x - xbar)),
        lambda x, H0=H0, q=q: H0 @ (x - xbar) + q,
        lambda x, H0=H0: H0.copy(),
    )
    cons = [
        ScalarOracle(
            lambda x, b=Bm[i], ci=c[i]: float(b @ (x - xbar) + ci),
            lambda x, b=Bm[i]: b.copy(),
            lambda x: np.zeros((n, n)),
        )
        for i in range(m)
    ]
    prob = NlpProblem(n, s, obj, cons, name="random")
    pt = KktPoint(xbar, y).validate(prob)
    return RandomNlp(prob, pt, classify_indices(prob, pt))
