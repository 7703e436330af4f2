"""Small problems with known answers.

Each builder returns fresh objects.  Known moduli are in the Euclidean
norm unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geq import (
    BoxNormalCone,
    ExplicitGraph,
    FiniteSelection,
    GeneralizedEquation,
    NonnegativeOrthant,
    SmoothMap,
    ZeroMap,
)
from .nlp import KktPoint, NlpProblem
from .ocp import ControlProblem, ReferenceSolution
from .poly import Polynomial
from .polyhedral import Box
from .regularity import DerivativeFamily, ParametricGE


# --- set-valued gallery ---------------------------------------------------------


def minus_x_x() -> GeneralizedEquation:
    """``F(x) = {-x, x}`` at ``0`` for ``0``; modulus 1."""
    return GeneralizedEquation(
        SmoothMap.zero(1), FiniteSelection([lambda x: -x, lambda x: x]), reference_point=[0.0]
    )


def minus_x_x_pieces():
    """The graph of ``{-x, x}`` as a union of two linear pieces ``(A, c)``."""
    return [(-np.eye(1), np.zeros(1)), (np.eye(1), np.zeros(1))]


def isolated_points_graph(k_max=2000) -> GeneralizedEquation:
    """``gph F = {(1/k, 0)} U {(0, 0)}``: not strongly subregular at 0."""
    pts = [([1.0 / k], [0.0]) for k in range(1, k_max + 1)] + [([0.0], [0.0])]
    return GeneralizedEquation(SmoothMap.zero(1), ExplicitGraph(pts), reference_point=[0.0])


def cube() -> GeneralizedEquation:
    """``x^3 = 0``: q-modulus infinite for ``q = 1`` and equal to 1 for ``q = 1/3``."""
    return GeneralizedEquation(
        SmoothMap(lambda x: x**3, 1, 1, jac=lambda x: np.array([[3 * x[0] ** 2]]), name="cube"),
        ZeroMap(),
        reference_point=[0.0],
    )


def identity(n=2) -> GeneralizedEquation:
    return GeneralizedEquation(SmoothMap.identity(n), ZeroMap(), reference_point=np.zeros(n))


def ell_infty_diag(N):
    """``diag(1, 1/2, ..., 1/N)``; modulus ``N`` from ``l_inf`` to ``l_2``."""
    return np.diag(1.0 / np.arange(1, N + 1))


def diag_ge(N) -> GeneralizedEquation:
    """The linear equation with matrix ``ell_infty_diag(N)``; Euclidean modulus ``N``."""
    return GeneralizedEquation(SmoothMap.linear(ell_infty_diag(N)), ZeroMap(), reference_point=np.zeros(N))


def sum_G() -> GeneralizedEquation:
    """``G(x) = {1 + x^2, 2x}``; strongly subregular at 0 for 0 with modulus 1/2."""
    return GeneralizedEquation(
        SmoothMap.zero(1),
        FiniteSelection([lambda x: 1 + x**2, lambda x: 2 * x]),
        reference_point=[0.0],
    )


def sum_counterexample() -> GeneralizedEquation:
    """``g + G`` with ``g(x) = {-1, -x}``: every pairwise sum, not strongly subregular."""
    sel = [
        lambda x: x**2,          # (1 + x^2) - 1
        lambda x: 1 - x + x**2,  # (1 + x^2) - x
        lambda x: 2 * x - 1,
        lambda x: x,
    ]
    return GeneralizedEquation(SmoothMap.zero(1), FiniteSelection(sel), reference_point=[0.0])


def scaled_halfline(a=2.0) -> GeneralizedEquation:
    """``0 in a x + N_{R_+}(x)``; modulus ``1/a``."""
    return GeneralizedEquation(
        SmoothMap.linear([[a]]), BoxNormalCone(Box([0.0], [np.inf])), reference_point=[0.0]
    )


# --- smooth fixtures for Newton-type methods ------------------------------------


@dataclass
class NewtonFixture:
    name: str
    ge: GeneralizedEquation
    x0: np.ndarray
    box_vi: bool = False


def _exp_shift():
    f = SmoothMap(lambda x: np.exp(x) - 2.0, 1, 1, jac=lambda x: np.array([[np.exp(x[0])]]), name="exp-2")
    return GeneralizedEquation(f, ZeroMap(), reference_point=[np.log(2.0)])


def _square_minus_one():
    f = SmoothMap(lambda x: x**2 - 1.0, 1, 1, jac=lambda x: np.array([[2 * x[0]]]), name="x^2-1")
    return GeneralizedEquation(f, ZeroMap(), reference_point=[1.0])


def _planar():
    def fun(x):
        return np.array([np.exp(x[0]) - 1 + x[1], x[0] + 2 * x[1] + x[1] ** 3 + x[1] ** 2])

    def jac(x):
        return np.array([[np.exp(x[0]), 1.0], [1.0, 2 + 3 * x[1] ** 2 + 2 * x[1]]])

    return GeneralizedEquation(SmoothMap(fun, 2, 2, jac=jac, name="planar"), ZeroMap(), reference_point=[0.0, 0.0])


def _box_vi():
    """``x1 = 0`` active with ``f1 = 1 > 0``; ``x2 = 1`` interior."""

    def fun(x):
        return np.array([x[0] + 1 + x[0] ** 2, x[1] ** 3 + x[1] - 2])

    def jac(x):
        return np.array([[1 + 2 * x[0], 0.0], [0.0, 3 * x[1] ** 2 + 1]])

    box = Box([0.0, 0.0], [np.inf, np.inf])
    return GeneralizedEquation(SmoothMap(fun, 2, 2, jac=jac, name="box-vi"), BoxNormalCone(box),
                               reference_point=[0.0, 1.0])


def _box_vi_upper():
    """Solution on the upper bound ``x = 1`` of ``[-1, 1]`` with ``f = -1``, second coordinate interior."""

    def fun(x):
        return np.array([np.sin(x[0]) - np.sin(1.0) - 1.0 + (x[1] - 0.5) ** 2, x[1] ** 2 + x[1] - 0.75])

    def jac(x):
        return np.array([[np.cos(x[0]), 2 * (x[1] - 0.5)], [0.0, 2 * x[1] + 1]])

    box = Box([-1.0, -1.0], [1.0, 1.0])
    return GeneralizedEquation(SmoothMap(fun, 2, 2, jac=jac, name="box-vi-upper"), BoxNormalCone(box),
                               reference_point=[1.0, 0.5])


def circle_nlp():
    """``min (x1-2)^2 + (x2-1)^2`` s.t. ``x1^2 + x2^2 <= 1``; projection of ``(2,1)`` on the disc."""
    obj = Polynomial(2, [(1, [2, 0]), (-4, [1, 0]), (1, [0, 2]), (-2, [0, 1]), (5, [0, 0])])
    con = Polynomial(2, [(1, [2, 0]), (1, [0, 2]), (-1, [0, 0])])
    prob = NlpProblem.from_polynomials(2, 0, obj, [con], name="circle")
    r5 = np.sqrt(5.0)
    return prob, KktPoint([2 / r5, 1 / r5], [r5 - 1])


def newton_fixtures():
    """Smooth, strongly subregular problems with near-solution starts."""
    from .nlp import kkt_generalized_equation

    prob7, pt7 = f7()
    circ, ptc = circle_nlp()
    return [
        NewtonFixture("x^2-1", _square_minus_one(), np.array([1.3])),
        NewtonFixture("exp-2", _exp_shift(), np.array([1.0])),
        NewtonFixture("planar", _planar(), np.array([0.2, -0.15])),
        NewtonFixture("box-vi", _box_vi(), np.array([0.2, 1.2]), box_vi=True),
        NewtonFixture("box-vi-upper", _box_vi_upper(), np.array([0.9, 0.6]), box_vi=True),
        NewtonFixture("circle-kkt", kkt_generalized_equation(circ, ptc),
                      np.r_[ptc.x, ptc.y] + np.array([0.05, -0.04, 0.1]), box_vi=True),
        NewtonFixture("f7-kkt", kkt_generalized_equation(prob7, pt7), np.array([0.6, 0.45, 0.9]), box_vi=True),
    ]


# --- NLP fixtures -----------------------------------------------------------------


def f7():
    """``min x1^2 + x2^2`` s.t. ``1 - x1 - x2 <= 0`` with KKT point ``((1/2, 1/2), 1)``."""
    obj = Polynomial(2, [(1, [2, 0]), (1, [0, 2])])
    g = Polynomial(2, [(1, [0, 0]), (-1, [1, 0]), (-1, [0, 1])])
    return NlpProblem.from_polynomials(2, 0, obj, [g], name="F7"), KktPoint([0.5, 0.5], [1.0])


def duplicated_constraint():
    """F7 with its constraint listed twice; SOSC holds, strict MFCQ fails."""
    obj = Polynomial(2, [(1, [2, 0]), (1, [0, 2])])
    g = Polynomial(2, [(1, [0, 0]), (-1, [1, 0]), (-1, [0, 1])])
    return NlpProblem.from_polynomials(2, 0, obj, [g, g], name="duplicated"), KktPoint([0.5, 0.5], [0.5, 0.5])


def indefinite_hessian():
    """``min -x^2`` on ``[-1, 1]`` at the stationary point ``0``."""
    obj = Polynomial(1, [(-1, [2])])
    cons = [Polynomial(1, [(1, [1]), (-1, [0])]), Polynomial(1, [(-1, [1]), (-1, [0])])]
    return NlpProblem.from_polynomials(1, 0, obj, cons, name="indefinite"), KktPoint([0.0], [0.0, 0.0])


def f7_parametric() -> ParametricGE:
    """KKT system of F7 with a parameter ``p`` added to the objective gradient."""
    prob, pt = f7()
    from .nlp import kkt_generalized_equation

    ge = kkt_generalized_equation(prob, pt)
    n = ge.dim

    def fun(p, x):
        return ge.smooth(x) + np.r_[p, 0.0]

    return ParametricGE(
        fun,
        lambda p, x: np.asarray(ge.smooth.jacobian(x)),
        lambda p, x: np.vstack([np.eye(2), np.zeros((1, 2))]),
        ge.set_part,
        n,
        2,
    )


# --- optimal control ----------------------------------------------------------------


_F8_PHI = [(0.5, [2, 0]), (-1, [1, 0]), (0.5, [0, 0]), (0.5, [0, 2])]
_G = [[(1, [0, 1])]]


def f8() -> ControlProblem:
    """``phi = ((y-1)^2 + u^2)/2``, ``y' = u``, ``U = [-0.6, 0.6]``; the bound is active early on."""
    return ControlProblem.from_polynomials(
        1, 1, Polynomial(2, _F8_PHI), [Polynomial(2, g) for g in _G], Box([-0.6], [0.6]), name="F8"
    )


def constant_solution_ocp() -> ControlProblem:
    """``phi = (y^2 + u^2)/2``: the zero triple solves every Euler system exactly."""
    phi = Polynomial(2, [(0.5, [2, 0]), (0.5, [0, 2])])
    return ControlProblem.from_polynomials(
        1, 1, phi, [Polynomial(2, g) for g in _G], Box([-0.6], [0.6]), name="constant"
    )


def lq_ocp() -> ControlProblem:
    """F8 without the control bound."""
    return ControlProblem.from_polynomials(
        1, 1, Polynomial(2, _F8_PHI), [Polynomial(2, g) for g in _G], Box([-np.inf], [np.inf]), name="LQ"
    )


def lq_exact() -> ReferenceSolution:
    """Closed-form solution of ``lq_ocp``."""
    c1 = np.cosh(1.0)
    th = np.tanh(1.0)

    def col(f):
        return lambda t: f(np.asarray(t, dtype=float))[:, None]

    return ReferenceSolution(
        y=col(lambda t: 1 - np.cosh(t) + th * np.sinh(t)),
        p=col(lambda t: -np.sinh(1 - t) / c1),
        u=col(lambda t: np.sinh(1 - t) / c1),
        dy=col(lambda t: np.sinh(1 - t) / c1),
        dp=col(lambda t: np.cosh(1 - t) / c1),
    )


# --- Clarke-type families -----------------------------------------------------------


def clarke_sufficient():
    """``f(x) = (x + |x|/2, -x + |x|/2)`` with ``F = R_+^2``; both one-sided slopes certify."""
    fam = DerivativeFamily([np.array([[1.5], [-0.5]]), np.array([[0.5], [-1.5]])])
    return fam, np.zeros(2), NonnegativeOrthant(2), np.zeros(1), np.zeros(2)


def clarke_failing():
    """A vertex family where ``A = [[1, -1], [0, 1]]`` leaves a ray of solutions."""
    fam = DerivativeFamily([np.array([[1.0, -1], [0, 1]]), np.array([[-1.0, -1], [0, 1]])])
    return fam, np.zeros(2), NonnegativeOrthant(2), np.zeros(2), np.zeros(2)


# --- perturbation instances ----------------------------------------------------------


@dataclass
class PerturbationInstance:
    """``G`` with known modulus ``kappa`` and a perturbation ``g`` of calmness ``mu``."""

    name: str
    kappa: float
    mu: float
    q: float
    ge_sum: GeneralizedEquation
    exact_sum_modulus: float | None = None


def perturbation_instances(seed=0, n_scalar=10, n_planar=10):
    """Linear instances: ``G = A x`` and ``g = mu R x`` with ``R`` orthogonal."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_scalar):
        a = float(rng.uniform(0.5, 3.0))
        kappa = 1.0 / a
        mu = float(rng.uniform(0.05, 0.9)) / kappa
        out.append(PerturbationInstance(
            f"scalar-{k}", kappa, mu, 1.0,
            GeneralizedEquation(SmoothMap.linear([[a - mu]]), ZeroMap(), reference_point=[0.0]),
            exact_sum_modulus=1.0 / (a - mu),
        ))
    for k in range(n_planar):
        A = rng.standard_normal((2, 2)) + 2 * np.eye(2)
        s = np.linalg.svd(A, compute_uv=False)
        kappa = 1.0 / s[-1]
        theta = rng.uniform(0, 2 * np.pi)
        R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        mu = float(rng.uniform(0.05, 0.9)) / kappa
        M = A + mu * R
        out.append(PerturbationInstance(
            f"planar-{k}", kappa, mu, 1.0,
            GeneralizedEquation(SmoothMap.linear(M), ZeroMap(), reference_point=[0.0, 0.0]),
            exact_sum_modulus=1.0 / np.linalg.svd(M, compute_uv=False)[-1],
        ))
    return out


def sine_perturbation():
    """``G(x) = x`` and ``g(x) = 0.4 sin x``; bound ``5/3``."""
    f = SmoothMap(lambda x: x + 0.4 * np.sin(x), 1, 1, jac=lambda x: np.array([[1 + 0.4 * np.cos(x[0])]]))
    return PerturbationInstance("sine", 1.0, 0.4, 1.0, GeneralizedEquation(f, ZeroMap(), reference_point=[0.0]))


def q2_perturbation_instances(seed=0, n=5):
    """``G = c sign(x) sqrt|x|`` (``kappa = 1/c^2`` for ``q = 2``) and ``g = -mu sign(x) sqrt|x|``."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        c = float(rng.uniform(0.5, 2.0))
        mu = float(rng.uniform(0.05, 0.8)) * c
        d = c - mu
        f = SmoothMap(lambda x, d=d: d * np.sign(x) * np.sqrt(np.abs(x)), 1, 1, name="signed-root")
        out.append(PerturbationInstance(
            f"q2-{k}", 1.0 / c**2, mu, 2.0,
            GeneralizedEquation(f, ZeroMap(), reference_point=[0.0]),
            exact_sum_modulus=1.0 / d**2,
        ))
    return out


def known_modulus_fixtures():
    """``(name, ge, modulus)`` triples with exact Euclidean moduli."""
    out = [
        ("minus-x-x", minus_x_x(), 1.0),
        ("identity", identity(2), 1.0),
        ("scaled-halfline", scaled_halfline(2.0), 0.5),
        ("sum-G", sum_G(), 0.5),
    ]
    for N in (2, 3, 4):
        out.append((f"diag-{N}", diag_ge(N), float(N)))
    for inst in perturbation_instances(n_scalar=3, n_planar=3):
        out.append((inst.name, inst.ge_sum, inst.exact_sum_modulus))
    return out
