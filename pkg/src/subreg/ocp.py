"""Euler discretization of a control-constrained optimal control problem.

The problem is

    minimize  int_0^1 phi(y(t), u(t)) dt,   y' = g(y, u),  y(0) = 0,  u(t) in U,

with Hamiltonian ``H(y, u, p) = phi(y, u) + p^T g(y, u)``.  Oracles act on
the stacked variable ``z = (y, u)``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geq import BoxNormalCone, GeneralizedEquation, SmoothMap
from .nlp import ScalarOracle
from .poly import Polynomial, finite_difference_gradient, finite_difference_jacobian
from .polyhedral import Box
from .solvers import NewtonConfig, SolveReport, natural_residual, semismooth_newton

log = logging.getLogger(__name__)

FD_TOL = 1e-4
SOLVE_TOL = 1e-10


class SolveFailure(RuntimeError):
    """The discrete optimality system was not solved; ``report`` holds the log."""

    def __init__(self, message, report: SolveReport):
        super().__init__(message)
        self.report = report


class ControlProblem:
    """Running cost ``phi``, dynamics ``g`` (``n`` scalar oracles) and control box ``U``.

    All oracles take ``z = (y, u)`` in ``R^(n+m)``.
    """

    def __init__(self, n, m, phi: ScalarOracle, g, U: Box, name="ocp", check_points=None):
        self.n, self.m = int(n), int(m)
        self.phi = phi
        self.g = list(g)
        if len(self.g) != self.n:
            raise ValueError(f"need {self.n} dynamics components, got {len(self.g)}")
        if U.dim != self.m:
            raise ValueError("control box has the wrong dimension")
        if np.any(U.lower > U.upper):
            raise ValueError("control box is empty")
        self.U = U
        self.name = name
        pts = check_points if check_points is not None else [np.linspace(-0.3, 0.4, n + m), np.full(n + m, 0.2)]
        for z in pts:
            self._self_check(np.asarray(z, dtype=float))

    @classmethod
    def from_polynomials(cls, n, m, phi: Polynomial, g, U: Box, **kw):
        return cls(n, m, ScalarOracle.polynomial(phi), [ScalarOracle.polynomial(p) for p in g], U, **kw)

    def _self_check(self, z):
        for k, o in enumerate([self.phi] + self.g):
            gr = np.asarray(o.grad(z), dtype=float)
            H = np.asarray(o.hess(z), dtype=float)
            scale = 1.0 + np.max(np.abs(gr)) + np.max(np.abs(H))
            if np.max(np.abs(gr - finite_difference_gradient(o.value, z))) > FD_TOL * scale:
                raise ValueError(f"oracle {k}: gradient disagrees with finite differences")
            if np.max(np.abs(H - finite_difference_jacobian(o.grad, z))) > FD_TOL * scale:
                raise ValueError(f"oracle {k}: Hessian disagrees with finite differences")

    def dynamics(self, y, u):
        z = np.concatenate([y, u])
        return np.array([gk.value(z) for gk in self.g])

    def dynamics_jac(self, y, u):
        z = np.concatenate([y, u])
        return np.array([gk.grad(z) for gk in self.g]).reshape(self.n, self.n + self.m)


def hamiltonian_grads(cp: ControlProblem, y, u, p):
    """``(H, grad_y H, grad_u H)`` at ``(y, u, p)``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if y.size != cp.n or p.size != cp.n or u.size != cp.m:
        raise ValueError("dimension mismatch")
    z = np.concatenate([y, u])
    H = float(cp.phi.value(z) + p @ cp.dynamics(y, u))
    dz = np.asarray(cp.phi.grad(z), dtype=float) + cp.dynamics_jac(y, u).T @ p
    return H, dz[: cp.n], dz[cp.n:]


def _hamiltonian_hess(cp, y, u, p):
    z = np.concatenate([y, u])
    Hzz = np.array(cp.phi.hess(z), dtype=float)
    for pk, gk in zip(p, cp.g):
        if pk != 0.0:
            Hzz = Hzz + pk * np.asarray(gk.hess(z), dtype=float)
    return Hzz


@dataclass
class DiscreteTriple:
    N: int
    y_nodes: np.ndarray  # (N+1, n), y_nodes[0] = 0
    p_nodes: np.ndarray  # (N+1, n), p_nodes[N] = 0
    u_cells: np.ndarray  # (N, m)
    iterations: int = 0

    def __post_init__(self):
        self.y_nodes = np.asarray(self.y_nodes, dtype=float)
        self.p_nodes = np.asarray(self.p_nodes, dtype=float)
        self.u_cells = np.asarray(self.u_cells, dtype=float)
        if self.y_nodes.shape[0] != self.N + 1 or self.p_nodes.shape[0] != self.N + 1:
            raise ValueError("node arrays need N+1 rows")
        if self.u_cells.shape[0] != self.N:
            raise ValueError("control array needs N rows")
        if np.any(self.y_nodes[0] != 0.0) or np.any(self.p_nodes[-1] != 0.0):
            raise ValueError("boundary conditions y(0) = 0 and p(1) = 0 must hold exactly")
        for a in (self.y_nodes, self.p_nodes, self.u_cells):
            if not np.all(np.isfinite(a)):
                raise ValueError("non-finite entries")

    @property
    def h(self):
        return 1.0 / self.N

    # piecewise interpolants on [0, 1]
    def y_at(self, t):
        return _interp_nodes(self.y_nodes, t)

    def p_at(self, t):
        return _interp_nodes(self.p_nodes, t)

    def u_at(self, t):
        i = np.clip(np.floor(np.asarray(t) * self.N).astype(int), 0, self.N - 1)
        return self.u_cells[i]

    def y_slope_at(self, t):
        i = np.clip(np.floor(np.asarray(t) * self.N).astype(int), 0, self.N - 1)
        return (self.y_nodes[i + 1] - self.y_nodes[i]) * self.N

    def p_slope_at(self, t):
        i = np.clip(np.floor(np.asarray(t) * self.N).astype(int), 0, self.N - 1)
        return (self.p_nodes[i + 1] - self.p_nodes[i]) * self.N

    def to_vector(self):
        return np.concatenate([self.y_nodes[1:].ravel(), self.p_nodes[:-1].ravel(), self.u_cells.ravel()])

    @classmethod
    def from_vector(cls, z, N, n, m, iterations=0):
        Y = z[: N * n].reshape(N, n)
        P = z[N * n: 2 * N * n].reshape(N, n)
        U = z[2 * N * n:].reshape(N, m)
        return cls(N, np.vstack([np.zeros((1, n)), Y]), np.vstack([P, np.zeros((1, n))]), U, iterations)

    def to_dict(self):
        return {"N": self.N, "y": self.y_nodes.tolist(), "p": self.p_nodes.tolist(), "u": self.u_cells.tolist()}


def _interp_nodes(V, t):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    grid = np.linspace(0.0, 1.0, V.shape[0])
    return np.column_stack([np.interp(t, grid, V[:, j]) for j in range(V.shape[1])])


def build_discrete_system(cp: ControlProblem, N: int) -> GeneralizedEquation:
    """Euler optimality system with unknowns ``(y^1..y^N, p^0..p^{N-1}, u^0..u^{N-1})``.

    Rows are ``(y^{i+1}-y^i)/h - g``, ``(p^{i+1}-p^i)/h + grad_y H(y^i, u^i, p^{i+1})``
    and ``grad_u H(y^i, u^i, p^i)``; the set part is the normal cone of ``U``
    on the control block.
    """
    if N < 2:
        raise ValueError("need N >= 2")
    n, m = cp.n, cp.m
    h = 1.0 / N
    dim = N * (2 * n + m)
    oy, op, ou = 0, N * n, 2 * N * n

    def unpack(z):
        t = DiscreteTriple.from_vector(np.asarray(z, dtype=float), N, n, m)
        return t.y_nodes, t.p_nodes, t.u_cells

    def fun(z):
        Y, P, U = unpack(z)
        out = np.empty(dim)
        for i in range(N):
            y, u = Y[i], U[i]
            out[oy + i * n: oy + (i + 1) * n] = (Y[i + 1] - y) / h - cp.dynamics(y, u)
            _, Hy, _ = hamiltonian_grads(cp, y, u, P[i + 1])
            out[op + i * n: op + (i + 1) * n] = (P[i + 1] - P[i]) / h + Hy
            _, _, Hu = hamiltonian_grads(cp, y, u, P[i])
            out[ou + i * m: ou + (i + 1) * m] = Hu
        return out

    def jac(z):
        Y, P, U = unpack(z)
        rows, cols, vals = [], [], []

        def put(r0, c0, B):
            B = np.atleast_2d(B)
            rr, cc = np.nonzero(B)
            rows.extend(r0 + rr)
            cols.extend(c0 + cc)
            vals.extend(B[rr, cc])

        I = np.eye(n)
        for i in range(N):
            y, u = Y[i], U[i]
            gz = cp.dynamics_jac(y, u)
            gy, gu = gz[:, :n], gz[:, n:]
            r = oy + i * n
            put(r, oy + i * n, I / h)  # y^{i+1}
            if i >= 1:
                put(r, oy + (i - 1) * n, -I / h - gy)
            put(r, ou + i * m, -gu)
            # adjoint row, Hamiltonian at p^{i+1}
            Hzz = _hamiltonian_hess(cp, y, u, P[i + 1])
            r = op + i * n
            put(r, op + i * n, -I / h)
            if i + 1 <= N - 1:
                put(r, op + (i + 1) * n, I / h + gy.T)
            if i >= 1:
                put(r, oy + (i - 1) * n, Hzz[:n, :n])
            put(r, ou + i * m, Hzz[:n, n:])
            # control row, Hamiltonian at p^i
            Hzz = _hamiltonian_hess(cp, y, u, P[i])
            r = ou + i * m
            if i >= 1:
                put(r, oy + (i - 1) * n, Hzz[n:, :n])
            put(r, ou + i * m, Hzz[n:, n:])
            put(r, op + i * n, gu.T)
        return sp.csc_matrix((vals, (rows, cols)), shape=(dim, dim))

    lower = np.concatenate([np.full(2 * N * n, -np.inf), np.tile(cp.U.lower, N)])
    upper = np.concatenate([np.full(2 * N * n, np.inf), np.tile(cp.U.upper, N)])
    smooth = SmoothMap(fun, dim, dim, jac=jac, name=f"dos[{cp.name},N={N}]")
    return GeneralizedEquation(smooth, BoxNormalCone(Box(lower, upper)))


def interpolate_triple(src: DiscreteTriple, N: int) -> DiscreteTriple:
    """Resample a discrete solution on a grid with ``N`` cells."""
    t = np.linspace(0.0, 1.0, N + 1)
    Y = src.y_at(t)
    P = src.p_at(t)
    Y[0] = 0.0
    P[-1] = 0.0
    U = src.u_at((np.arange(N) + 0.5) / N)
    return DiscreteTriple(N, Y, P, U)


def solve_discrete_os(cp: ControlProblem, N: int, warm_start: DiscreteTriple | None = None,
                      cfg: NewtonConfig | None = None) -> DiscreteTriple:
    """Solve the Euler optimality system by semismooth Newton on its natural map."""
    ge = build_discrete_system(cp, N)
    if warm_start is None:
        z0 = np.zeros(ge.dim)
    else:
        if warm_start.N != N:
            warm_start = interpolate_triple(warm_start, N)
        z0 = warm_start.to_vector()
    cfg = cfg or NewtonConfig(max_iter=50, residual_tol=1e-12)
    rep = semismooth_newton(ge, z0, cfg)
    res = natural_residual(ge, rep.x)
    if res > SOLVE_TOL:
        raise SolveFailure(f"discrete system N={N} not solved: status {rep.status}, residual {res:.3g}", rep)
    log.debug("N=%d solved in %d iterations", N, rep.iterations)
    return DiscreteTriple.from_vector(rep.x, N, cp.n, cp.m, iterations=rep.iterations)


def residual_w_norm(cp: ControlProblem, triple: DiscreteTriple, fine_factor: int = 16) -> float:
    """Sup over ``t`` of the summed component norms of the residual function ``w_N``.

    ``y_N`` and ``p_N`` are piecewise linear, ``u_N`` piecewise constant.
    """
    N = triple.N
    s = np.linspace(0.0, 1.0, fine_factor + 1)
    worst = 0.0
    for i in range(N):
        yi, ui = triple.y_nodes[i], triple.u_cells[i]
        g_i = cp.dynamics(yi, ui)
        _, Hy_i, _ = hamiltonian_grads(cp, yi, ui, triple.p_nodes[i + 1])
        _, _, Hu_i = hamiltonian_grads(cp, yi, ui, triple.p_nodes[i])
        for sk in s:
            y = (1 - sk) * yi + sk * triple.y_nodes[i + 1]
            p = (1 - sk) * triple.p_nodes[i] + sk * triple.p_nodes[i + 1]
            _, Hy, Hu = hamiltonian_grads(cp, y, ui, p)
            w = (np.max(np.abs(g_i - cp.dynamics(y, ui)))
                 + np.max(np.abs(Hy_i - Hy))
                 + np.max(np.abs(Hu_i - Hu)))
            worst = max(worst, float(w))
    return worst


@dataclass
class ReferenceSolution:
    """Callables ``y, p, u, dy, dp`` of time used as the comparison point."""

    y: object
    p: object
    u: object
    dy: object
    dp: object

    @classmethod
    def from_triple(cls, t: DiscreteTriple):
        return cls(t.y_at, t.p_at, t.u_at, t.y_slope_at, t.p_slope_at)


def x_norm_error(triple: DiscreteTriple, ref: ReferenceSolution, per_cell=64) -> float:
    """Discrete ``W^{1,inf} x W^{1,inf} x L^inf`` distance to a reference solution.

    Node values of ``y`` and ``p`` plus, over sample points inside each
    cell, slope deviations of ``y`` and ``p`` and the control deviation.
    """
    N = triple.N
    nodes = np.linspace(0.0, 1.0, N + 1)
    e_y = np.max(np.abs(triple.y_nodes - np.asarray(ref.y(nodes)).reshape(N + 1, -1)))
    e_p = np.max(np.abs(triple.p_nodes - np.asarray(ref.p(nodes)).reshape(N + 1, -1)))
    # midpoints of per_cell sub-cells in every coarse cell
    tt = ((np.arange(N)[:, None] + (np.arange(per_cell)[None, :] + 0.5) / per_cell) / N).ravel()
    cell = np.repeat(np.arange(N), per_cell)
    sy = (triple.y_nodes[cell + 1] - triple.y_nodes[cell]) * N
    sp_ = (triple.p_nodes[cell + 1] - triple.p_nodes[cell]) * N
    e_dy = np.max(np.abs(sy - np.asarray(ref.dy(tt)).reshape(sy.shape)))
    e_dp = np.max(np.abs(sp_ - np.asarray(ref.dp(tt)).reshape(sp_.shape)))
    e_u = np.max(np.abs(triple.u_cells[cell] - np.asarray(ref.u(tt)).reshape(len(tt), -1)))
    return float(e_y + e_p + e_dy + e_dp + e_u)


@dataclass
class ConvergenceStudy:
    N_list: list
    errors: list
    fitted_order: float | None
    fitted_c: float | None
    w_norms: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    exact_errors: list | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "error", "w_norm", "iterations"])
        for row in zip(self.N_list, self.errors, self.w_norms, self.iterations):
            w.writerow([row[0], repr(float(row[1])), repr(float(row[2])), row[3]])
        return buf.getvalue()

    def summary(self):
        return {
            "fitted_order": self.fitted_order,
            "fitted_c": self.fitted_c,
            "N_list": list(self.N_list),
            "errors": [float(e) for e in self.errors],
            "exact_errors": None if self.exact_errors is None else [float(e) for e in self.exact_errors],
            "diagnostics": self.diagnostics,
        }

    def to_json(self):
        return json.dumps(self.summary(), sort_keys=True, indent=2)


def fit_order(N_list, errors):
    """Least-squares slope and constant of ``log e = log c + order log(1/N)``."""
    if len(N_list) < 2:
        return None, None
    X = np.log(1.0 / np.asarray(N_list, dtype=float))
    Y = np.log(np.asarray(errors, dtype=float))
    order, logc = np.polyfit(X, Y, 1)
    return float(order), float(np.exp(logc))


def convergence_experiment(cp: ControlProblem, N_list, N_ref: int, exact: ReferenceSolution | None = None,
                           fine_factor: int = 16) -> ConvergenceStudy:
    """Error of Euler solutions against a fine-grid reference (and optionally a closed form)."""
    N_list = [int(N) for N in N_list]
    if not N_list or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be nonempty and strictly increasing")
    if N_ref < 8 * max(N_list):
        raise ValueError(f"N_ref must be at least 8 * max(N_list) = {8 * max(N_list)}")
    sols = []
    prev = None
    for N in N_list:
        prev = solve_discrete_os(cp, N, warm_start=prev)
        sols.append(prev)
    ref_triple = solve_discrete_os(cp, N_ref, warm_start=prev)
    ref = ReferenceSolution.from_triple(ref_triple)
    per_cell = lambda N: max(1, N_ref // N)  # noqa: E731
    errors = [x_norm_error(t, ref, per_cell(t.N)) for t in sols]
    exact_errors = None
    if exact is not None:
        exact_errors = [x_norm_error(t, exact, per_cell(t.N)) for t in sols]
    order, c = fit_order(N_list, errors)
    diag = {"reference_iterations": ref_triple.iterations}
    if order is None:
        diag["note"] = "a single grid gives no order fit"
    return ConvergenceStudy(
        N_list=N_list,
        errors=errors,
        fitted_order=order,
        fitted_c=c,
        w_norms=[residual_w_norm(cp, t, fine_factor) for t in sols],
        iterations=[t.iterations for t in sols],
        exact_errors=exact_errors,
        diagnostics=diag,
    )
