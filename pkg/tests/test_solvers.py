import csv
import io

import numpy as np
import pytest

from subreg import fixtures
from subreg.geq import BoxNormalCone, GeneralizedEquation, SmoothMap, ZeroMap, residual_distance
from subreg.nlp import kkt_generalized_equation
from subreg.polyhedral import Box
from subreg.solvers import (
    NewtonConfig,
    broyden_inexact_newton,
    convergence_order_estimate,
    josephy_newton,
    perturbed_sequence_check,
    semismooth_newton,
    superlinear_witness,
)

FIXTURES = {fx.name: fx for fx in fixtures.newton_fixtures()}


def jac0(fx):
    return np.atleast_2d(np.asarray(fx.ge.smooth.jacobian(fx.x0), dtype=float))


class TestConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            NewtonConfig(max_iter=0)
        with pytest.raises(ValueError):
            NewtonConfig(residual_tol=0.0)
        with pytest.raises(ValueError):
            NewtonConfig(subproblem="cg")


class TestOrderEstimate:
    def test_quadratic_sequence(self):
        e = [1e-1 * (1e-1) ** (2**k - 1) for k in range(4)]
        assert convergence_order_estimate(e) == pytest.approx(2.0, abs=1e-9)

    def test_linear_sequence(self):
        e = [0.05 * 0.5**k for k in range(20)]
        assert convergence_order_estimate(e) == pytest.approx(1.0, abs=1e-9)

    def test_too_few_pairs(self):
        assert convergence_order_estimate([1e-2, 1e-4]) is None
        assert convergence_order_estimate([1.0, 0.5, 1e-20]) is None

    def test_witness(self):
        assert superlinear_witness([1e-1, 1e-2, 1e-4, 1e-8, 1e-16 * 10])
        assert not superlinear_witness([1.0, 0.5, 0.25, 0.125])


class TestJosephyNewton:
    def test_square_root_of_one(self):
        rep = josephy_newton(FIXTURES["x^2-1"].ge, [3.0])
        assert rep.converged
        assert rep.x[0] == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("name", ["x^2-1", "exp-2", "planar", "box-vi", "box-vi-upper", "circle-kkt"])
    def test_quadratic_order(self, name):
        fx = FIXTURES[name]
        rep = josephy_newton(fx.ge, fx.x0)
        assert rep.converged
        assert 1.8 <= rep.order_fit <= 2.2

    def test_f7_kkt_single_step(self):
        # a QP: the linearisation is exact
        fx = FIXTURES["f7-kkt"]
        rep = josephy_newton(fx.ge, fx.x0)
        assert rep.converged and rep.iterations == 1
        np.testing.assert_allclose(rep.x, [0.5, 0.5, 1.0], atol=1e-12)

    def test_step_inclusions_solved(self):
        for fx in FIXTURES.values():
            rep = josephy_newton(fx.ge, fx.x0)
            assert max(rep.step_residuals) <= 1e-9

    def test_budget_exhausted(self):
        rep = josephy_newton(FIXTURES["x^2-1"].ge, [1000.0], NewtonConfig(max_iter=1))
        assert rep.status == "budget-exhausted" and rep.iterations == 1

    def test_subproblem_failure(self):
        # f'(0) = 0 with no set part: the linearisation has no solution
        ge = GeneralizedEquation(SmoothMap(lambda x: x**2 + 1.0, 1, 1), ZeroMap())
        rep = josephy_newton(ge, [0.0])
        assert rep.status == "subproblem-failed"

    def test_inner_semismooth_agrees(self):
        fx = FIXTURES["box-vi"]
        a = josephy_newton(fx.ge, fx.x0)
        b = josephy_newton(fx.ge, fx.x0, NewtonConfig(subproblem="inner-semismooth"))
        np.testing.assert_allclose(a.x, b.x, atol=1e-12)

    def test_already_solved(self):
        fx = FIXTURES["exp-2"]
        rep = josephy_newton(fx.ge, fx.ge.reference_point)
        assert rep.converged and rep.iterations == 0

    def test_perturbed_target(self):
        cfg = NewtonConfig(perturbation_p=np.array([0.21]))
        rep = josephy_newton(FIXTURES["x^2-1"].ge, [1.3], cfg)
        assert rep.x[0] == pytest.approx(np.sqrt(1.21), abs=1e-12)


class TestSemismooth:
    @pytest.mark.parametrize("name", ["box-vi", "box-vi-upper", "circle-kkt"])
    def test_superlinear_witness(self, name):
        fx = FIXTURES[name]
        rep = semismooth_newton(fx.ge, fx.x0)
        assert rep.converged
        assert superlinear_witness(rep.errors_to_reference)
        assert residual_distance(fx.ge, rep.x) <= 1e-10

    def test_lcp_solution(self):
        M = np.array([[2.0, 1.0], [1.0, 2.0]])
        q = np.array([-1.0, 1.0])
        ge = GeneralizedEquation(SmoothMap.linear(M, q), BoxNormalCone(Box([0, 0], [np.inf, np.inf])))
        rep = semismooth_newton(ge, [1.0, 1.0])
        np.testing.assert_allclose(rep.x, [0.5, 0.0], atol=1e-12)

    def test_requires_box(self):
        with pytest.raises(TypeError):
            semismooth_newton(fixtures.minus_x_x(), [0.1])


class TestBroyden:
    @pytest.mark.parametrize("name", ["x^2-1", "exp-2", "box-vi", "box-vi-upper"])
    def test_dennis_more(self, name):
        fx = FIXTURES[name]
        rep = broyden_inexact_newton(fx.ge, fx.x0, jac0(fx))
        assert rep.converged
        assert rep.dennis_more_trace[-1] < 1e-3
        assert rep.order_fit > 1.2

    def test_inexact_residual_term(self):
        fx = FIXTURES["exp-2"]
        rep = broyden_inexact_newton(fx.ge, fx.x0, jac0(fx), residual_schedule=lambda x, k: [1e-3 * 0.1**k])
        assert rep.converged
        assert abs(rep.x[0] - np.log(2.0)) <= 1e-10

    def test_shape_check(self):
        fx = FIXTURES["planar"]
        with pytest.raises(ValueError):
            broyden_inexact_newton(fx.ge, fx.x0, np.eye(3))

    def test_no_reference_no_trace(self):
        ge = GeneralizedEquation(SmoothMap(lambda x: x**3 - 8.0, 1, 1), ZeroMap())
        rep = broyden_inexact_newton(ge, [2.1], [[3 * 2.1**2]])
        assert rep.dennis_more_trace is None and rep.converged


class TestCsv:
    def test_format(self):
        fx = FIXTURES["x^2-1"]
        rep = broyden_inexact_newton(fx.ge, fx.x0, jac0(fx))
        text = rep.to_csv()
        assert "\r" not in text and text.endswith("\n")
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == ["iter", "residual", "error", "dm_quotient"]
        assert len(rows) == rep.iterations + 2
        assert rows[1][3] == "" and rows[2][3] != ""
        for r in rows[1:]:
            float(r[1])
            float(r[2])

    def test_to_dict_roundtrip(self):
        fx = FIXTURES["planar"]
        d = josephy_newton(fx.ge, fx.x0).to_dict()
        assert d["status"] == "converged" and len(d["residuals"]) == d["iterations"] + 1


class TestPerturbedSequence:
    def samples(self, ge, n=30, seed=0, scale=1e-3):
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(n):
            p = rng.standard_normal(ge.dim)
            u = rng.standard_normal(ge.dim)
            out.append((scale * rng.uniform() * p / np.linalg.norm(p),
                        ge.reference_point + scale * rng.uniform() * u / np.linalg.norm(u)))
        return out

    def test_holds_with_modulus(self):
        prob, pt = fixtures.f7()
        ge = kkt_generalized_equation(prob, pt)
        worst, det = perturbed_sequence_check(ge, self.samples(ge), 0.5, 3.0)
        assert worst <= 0 and not det["failed_samples"]

    def test_lambda_zero_fails(self):
        prob, pt = fixtures.f7()
        ge = kkt_generalized_equation(prob, pt)
        worst, _ = perturbed_sequence_check(ge, self.samples(ge), 0.5, 0.0)
        assert worst > 0

    def test_argument_checks(self):
        ge = FIXTURES["planar"].ge
        with pytest.raises(ValueError):
            perturbed_sequence_check(ge, [], 1.0, 1.0)
        free = GeneralizedEquation(SmoothMap.identity(1), ZeroMap())
        with pytest.raises(ValueError):
            perturbed_sequence_check(free, [], 0.5, 1.0)
