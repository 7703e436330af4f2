"""Newton-type methods for generalized equations and convergence diagnostics."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geq import (
    GeneralizedEquation,
    ZeroMap,
    avi_solve,
    b_jacobian_natural_map,
    box_of,
    natural_map,
    residual_distance,
)
from .numerics import SingularMatrixError, solve_linear

log = logging.getLogger(__name__)

NOISE_FLOOR = 1e-15
ORDER_WINDOW = 1e-1
BROYDEN_MIN_STEP = 1e-14


@dataclass
class NewtonConfig:
    max_iter: int = 50
    residual_tol: float = 1e-12
    step_tol: float = 1e-14
    perturbation_p: np.ndarray | None = None
    subproblem: str = "exact-avi"  # or "inner-semismooth"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.residual_tol <= 0 or self.step_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.subproblem not in ("exact-avi", "inner-semismooth"):
            raise ValueError(f"unknown subproblem solver {self.subproblem!r}")


@dataclass
class SolveReport:
    iterates: list
    residuals: list
    errors_to_reference: list | None
    status: str  # converged | stalled | budget-exhausted | subproblem-failed
    order_fit: float | None = None
    dennis_more_trace: list | None = None
    step_residuals: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def x(self):
        return self.iterates[-1]

    @property
    def iterations(self):
        return len(self.iterates) - 1

    @property
    def converged(self):
        return self.status == "converged"

    def to_csv(self) -> str:
        """Iterate log with columns ``iter,residual,error,dm_quotient``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "residual", "error", "dm_quotient"])
        for k, r in enumerate(self.residuals):
            err = self.errors_to_reference[k] if self.errors_to_reference else ""
            dm = ""
            if self.dennis_more_trace and k >= 1 and k - 1 < len(self.dennis_more_trace):
                dm = repr(float(self.dennis_more_trace[k - 1]))
            w.writerow([k, repr(float(r)), repr(float(err)) if err != "" else "", dm])
        return buf.getvalue()

    def to_dict(self):
        return {
            "status": self.status,
            "iterations": self.iterations,
            "x": np.asarray(self.x).tolist(),
            "residuals": [float(r) for r in self.residuals],
            "errors": None if self.errors_to_reference is None else [float(e) for e in self.errors_to_reference],
            "order_fit": self.order_fit,
            "dennis_more_trace": None if self.dennis_more_trace is None else [float(t) for t in self.dennis_more_trace],
            "diagnostics": self.diagnostics,
        }


def convergence_order_estimate(errors, upper=ORDER_WINDOW, floor=NOISE_FLOOR, pairs=4):
    """Slope of ``log e_{k+1}`` against ``log e_k`` over the last valid pairs.

    Only errors in ``(floor, upper]`` take part, and the pairs must be
    consecutive.  Returns ``None`` when fewer than two pairs are available.
    """
    e = np.asarray([np.nan if v is None else v for v in errors], dtype=float)
    valid = np.isfinite(e) & (e > floor) & (e <= upper)
    pts = [(np.log(e[k]), np.log(e[k + 1])) for k in range(len(e) - 1) if valid[k] and valid[k + 1]]
    pts = pts[-pairs:]
    if len(pts) < 2:
        return None
    X, Y = np.array(pts).T
    if np.ptp(X) == 0:
        return None
    slope = np.polyfit(X, Y, 1)[0]
    return float(slope)


def superlinear_witness(errors, floor=NOISE_FLOOR):
    """Last three error ratios strictly decreasing and the last one below 1e-2."""
    e = [v for v in errors if v is not None and v > floor]
    if len(e) < 4:
        return False
    r = [e[k + 1] / e[k] for k in range(len(e) - 1)][-3:]
    return bool(r[0] > r[1] > r[2] and r[2] < 1e-2)


def _target(ge, cfg):
    p = cfg.perturbation_p
    if p is None:
        return ge.reference_value
    return ge.reference_value + np.asarray(p, dtype=float)


def _errors(ge, iterates):
    if ge.reference_point is None:
        return None
    return [float(np.linalg.norm(x - ge.reference_point)) for x in iterates]


def _linear_step(A, rhs):
    if sp.issparse(A):
        x = spla.spsolve(sp.csc_matrix(A), rhs)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("sparse solve failed")
        return np.asarray(x)
    return solve_linear(A, rhs)


def _affine_step(ge, M, q, target, anchor):
    """Solve ``q + M z + F(z) ∋ target`` and return ``z`` (``None`` on failure)."""
    if isinstance(ge.set_part, ZeroMap):
        try:
            return _linear_step(M, target - q)
        except SingularMatrixError:
            return None
    return avi_solve(M, q - target, ge.set_part, anchor, dim=ge.dim)


def _step_residual(ge, M, q, z, target):
    """Distance of ``target`` from ``q + M z + F(z)``."""
    return ge.set_part.distance(z, target - (q + M @ z))


def _finish(ge, iterates, residuals, status, diagnostics, step_res, dm=None):
    errors = _errors(ge, iterates)
    order = convergence_order_estimate(errors) if errors else None
    return SolveReport(
        iterates=iterates,
        residuals=residuals,
        errors_to_reference=errors,
        status=status,
        order_fit=order,
        dennis_more_trace=dm,
        step_residuals=step_res,
        diagnostics=diagnostics,
    )


def josephy_newton(ge: GeneralizedEquation, x0, cfg: NewtonConfig | None = None) -> SolveReport:
    """Josephy-Newton iteration ``f(x_k) + Df(x_k)(x - x_k) + F(x) ∋ ybar + p``."""
    cfg = cfg or NewtonConfig()
    if cfg.subproblem == "inner-semismooth":
        return _josephy_inner_semismooth(ge, x0, cfg)
    target = _target(ge, cfg)
    x = np.asarray(x0, dtype=float).copy()
    iterates, residuals, step_res = [x.copy()], [residual_distance(ge, x, target)], []
    diagnostics = {"method": "josephy", "subproblem": cfg.subproblem}
    if residuals[0] <= cfg.residual_tol:
        return _finish(ge, iterates, residuals, "converged", diagnostics, step_res)
    for _ in range(cfg.max_iter):
        fx = ge.smooth(x)
        J = ge.smooth.jacobian(x)
        if sp.issparse(J):
            J = J.toarray()
        q = fx - J @ x
        z = _affine_step(ge, J, q, target, x)
        if z is None:
            diagnostics["failure"] = "linearized subproblem has no solution"
            return _finish(ge, iterates, residuals, "subproblem-failed", diagnostics, step_res)
        step_res.append(_step_residual(ge, J, q, z, target))
        step = np.linalg.norm(z - x)
        x = z
        iterates.append(x.copy())
        residuals.append(residual_distance(ge, x, target))
        if residuals[-1] <= cfg.residual_tol or step <= cfg.step_tol:
            return _finish(ge, iterates, residuals, "converged", diagnostics, step_res)
    return _finish(ge, iterates, residuals, "budget-exhausted", diagnostics, step_res)


def _josephy_inner_semismooth(ge, x0, cfg):
    """Josephy-Newton where each affine subproblem is solved by semismooth Newton."""
    from .geq import SmoothMap

    target = _target(ge, cfg)
    x = np.asarray(x0, dtype=float).copy()
    iterates, residuals, step_res = [x.copy()], [residual_distance(ge, x, target)], []
    diagnostics = {"method": "josephy", "subproblem": "inner-semismooth"}
    if residuals[0] <= cfg.residual_tol:
        return _finish(ge, iterates, residuals, "converged", diagnostics, step_res)
    for _ in range(cfg.max_iter):
        J = ge.smooth.jacobian(x)
        if sp.issparse(J):
            J = J.toarray()
        q = ge.smooth(x) - J @ x
        sub = GeneralizedEquation(SmoothMap.linear(J, q), ge.set_part, reference_value=target)
        inner = semismooth_newton(sub, x, NewtonConfig(max_iter=100, residual_tol=1e-14))
        if inner.status == "stalled" or natural_residual(sub, inner.x) > 1e-10:
            diagnostics["failure"] = "inner semismooth solve failed"
            return _finish(ge, iterates, residuals, "subproblem-failed", diagnostics, step_res)
        z = inner.x
        step_res.append(_step_residual(ge, J, q, z, target))
        step = np.linalg.norm(z - x)
        x = z
        iterates.append(x.copy())
        residuals.append(residual_distance(ge, x, target))
        if residuals[-1] <= cfg.residual_tol or step <= cfg.step_tol:
            return _finish(ge, iterates, residuals, "converged", diagnostics, step_res)
    return _finish(ge, iterates, residuals, "budget-exhausted", diagnostics, step_res)


def natural_residual(ge, x, target=None):
    return float(np.max(np.abs(natural_map(ge, x, target)), initial=0.0))


def semismooth_newton(ge: GeneralizedEquation, x0, cfg: NewtonConfig | None = None) -> SolveReport:
    """Semismooth Newton on the natural map; each step solves ``A_k d = -Phi(x_k)``."""
    cfg = cfg or NewtonConfig()
    target = _target(ge, cfg)
    box_of(ge.set_part, ge.dim)
    x = np.asarray(x0, dtype=float).copy()
    phi = natural_map(ge, x, target)
    iterates, residuals, step_res = [x.copy()], [float(np.max(np.abs(phi), initial=0.0))], []
    diagnostics = {"method": "semismooth"}
    if residuals[0] <= cfg.residual_tol:
        return _finish(ge, iterates, residuals, "converged", diagnostics, step_res)
    for _ in range(cfg.max_iter):
        A = b_jacobian_natural_map(ge, x, target)
        try:
            d = _linear_step(A, -phi)
        except SingularMatrixError:
            diagnostics["failure"] = "singular generalized Jacobian"
            return _finish(ge, iterates, residuals, "stalled", diagnostics, step_res)
        step_res.append(float(np.max(np.abs(A @ d + phi), initial=0.0)))
        x = x + d
        phi = natural_map(ge, x, target)
        iterates.append(x.copy())
        residuals.append(float(np.max(np.abs(phi), initial=0.0)))
        if residuals[-1] <= cfg.residual_tol or np.linalg.norm(d) <= cfg.step_tol:
            return _finish(ge, iterates, residuals, "converged", diagnostics, step_res)
    return _finish(ge, iterates, residuals, "budget-exhausted", diagnostics, step_res)


def broyden_inexact_newton(
    ge: GeneralizedEquation,
    x0,
    B0,
    residual_schedule=None,
    cfg: NewtonConfig | None = None,
) -> SolveReport:
    """Inexact quasi-Newton iteration with the good Broyden update.

    Each step solves ``f(x_k) + B_k (x - x_k) + r_k(x_k) + F(x) ∋ ybar + p``.
    ``residual_schedule(x, k)`` supplies the inexactness term ``r_k``.
    When a reference point is known the Dennis-More quotient
    ``(||(Df(xbar) - B_k) s_k|| + ||r_k(x_k)||) / ||s_k||`` is recorded per step.
    """
    cfg = cfg or NewtonConfig()
    target = _target(ge, cfg)
    x = np.asarray(x0, dtype=float).copy()
    B = np.array(B0, dtype=float, copy=True)
    if B.shape != (ge.dim, ge.dim):
        raise ValueError(f"B0 must be {ge.dim}x{ge.dim}")
    r_of = residual_schedule or (lambda x, k: np.zeros(ge.smooth.dim_out))
    D_ref = None
    if ge.reference_point is not None:
        D_ref = ge.smooth.jacobian(ge.reference_point)
        D_ref = D_ref.toarray() if sp.issparse(D_ref) else D_ref
    iterates, residuals, step_res = [x.copy()], [residual_distance(ge, x, target)], []
    dm = [] if D_ref is not None else None
    skipped = []
    diagnostics = {"method": "broyden", "skipped_updates": skipped}
    if residuals[0] <= cfg.residual_tol:
        return _finish(ge, iterates, residuals, "converged", diagnostics, step_res, dm)
    fx = ge.smooth(x)
    for k in range(cfg.max_iter):
        rk = np.asarray(r_of(x, k), dtype=float).reshape(-1)
        q = fx + rk - B @ x
        z = _affine_step(ge, B, q, target, x)
        if z is None:
            diagnostics["failure"] = "quasi-Newton subproblem has no solution"
            return _finish(ge, iterates, residuals, "subproblem-failed", diagnostics, step_res, dm)
        step_res.append(_step_residual(ge, B, q, z, target))
        s = z - x
        ns = np.linalg.norm(s)
        if dm is not None and ns > 0:
            dm.append(float((np.linalg.norm((D_ref - B) @ s) + np.linalg.norm(rk)) / ns))
        fz = ge.smooth(z)
        if ns < BROYDEN_MIN_STEP:
            skipped.append(k)
        else:
            B = B + np.outer(fz - fx - B @ s, s) / (s @ s)
        x, fx = z, fz
        iterates.append(x.copy())
        residuals.append(residual_distance(ge, x, target))
        if residuals[-1] <= cfg.residual_tol or ns <= cfg.step_tol:
            return _finish(ge, iterates, residuals, "converged", diagnostics, step_res, dm)
    return _finish(ge, iterates, residuals, "budget-exhausted", diagnostics, step_res, dm)


def perturbed_sequence_check(ge: GeneralizedEquation, samples, gamma, lam, cfg=None):
    """Worst violation of ``sup_k ||x_k - xbar|| <= gamma ||u - xbar|| + lam ||p||``.

    For every ``(p, u)`` the perturbed Josephy-Newton sequence is run from
    ``u``; the supremum is over ``k >= 1``.  Returns ``(worst, details)``
    where ``worst <= 0`` means the bound held on every solved sample.
    """
    if ge.reference_point is None:
        raise ValueError("perturbed sequence check needs a reference point")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    xbar = ge.reference_point
    base = cfg or NewtonConfig()
    worst = -np.inf
    failed = []
    margins = []
    for idx, (p, u) in enumerate(samples):
        p = np.asarray(p, dtype=float)
        u = np.asarray(u, dtype=float)
        run_cfg = NewtonConfig(
            max_iter=base.max_iter,
            residual_tol=base.residual_tol,
            step_tol=base.step_tol,
            perturbation_p=p,
            subproblem=base.subproblem,
        )
        rep = josephy_newton(ge, u, run_cfg)
        if rep.status == "subproblem-failed":
            failed.append(idx)
            continue
        tail = rep.iterates[1:] or [u]
        sup = max(np.linalg.norm(x - xbar) for x in tail)
        margin = sup - (gamma * np.linalg.norm(u - xbar) + lam * np.linalg.norm(p))
        margins.append(float(margin))
        worst = max(worst, margin)
    return float(worst), {"margins": margins, "failed_samples": failed}
