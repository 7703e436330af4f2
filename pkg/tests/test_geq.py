import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subreg import fixtures
from subreg.geq import (
    BoxNormalCone,
    ExplicitGraph,
    GeneralizedEquation,
    KktCone,
    NonnegativeOrthant,
    PolyhedralNormalCone,
    SmoothMap,
    ZeroMap,
    avi_solve,
    b_jacobian_natural_map,
    central_difference_jacobian,
    natural_map,
    residual_distance,
)
from subreg.nlp import linearized_kkt
from subreg.polyhedral import Box, Polyhedron
from oracles import lcp_brute

HALFLINE = BoxNormalCone(Box([0.0], [np.inf]))


def scalar_ge(fun, C, xbar=None, dfun=None):
    jac = (lambda x: np.array([[dfun(x[0])]])) if dfun else None
    return GeneralizedEquation(SmoothMap(fun, 1, 1, jac=jac), C, reference_point=xbar)


class TestSmoothMap:
    def test_fallback_jacobian(self):
        f = SmoothMap(lambda x: np.array([np.sin(x[0]) * x[1], x[0] ** 2]), 2, 2)
        x = np.array([0.3, -1.2])
        J = f.jacobian(x)
        np.testing.assert_allclose(J, [[np.cos(0.3) * -1.2, np.sin(0.3)], [0.6, 0]], atol=1e-8)

    def test_sum(self):
        f = SmoothMap.identity(2) + SmoothMap.linear(2 * np.eye(2))
        np.testing.assert_allclose(f([1.0, 2.0]), [3.0, 6.0])
        np.testing.assert_allclose(f.jacobian([0, 0]), 3 * np.eye(2))

    def test_central_difference_step(self):
        f = SmoothMap(lambda x: x**3, 1, 1)
        assert central_difference_jacobian(f, np.array([1e3]))[0, 0] == pytest.approx(3e6, rel=1e-6)


class TestResidual:
    def test_identity(self):
        ge = fixtures.identity(1)
        assert residual_distance(ge, [0.3]) == pytest.approx(0.3)

    def test_selection(self):
        ge = fixtures.minus_x_x()
        for x in (-0.7, 0.0, 0.2):
            assert residual_distance(ge, [x]) == pytest.approx(abs(x))

    def test_explicit_graph(self):
        ge = fixtures.isolated_points_graph(50)
        assert residual_distance(ge, [1 / 5]) == 0.0
        assert residual_distance(ge, [0.3]) == np.inf

    def test_empty_graph_rejected(self):
        with pytest.raises(ValueError):
            ExplicitGraph([])

    def test_box_infeasible_infinite(self):
        ge = scalar_ge(lambda x: x, HALFLINE, [0.0])
        assert residual_distance(ge, [-0.1]) == np.inf
        # at 0 the normal cone is R_-: d(0, x + R_-) = max(x, 0)
        assert residual_distance(ge, [0.0]) == 0.0

    def test_polyhedral_vs_box(self):
        box = Box([0.0, -1.0], [1.0, 1.0])
        f = SmoothMap.linear([[1.0, 0.5], [0.5, 2.0]], [0.3, -0.2])
        g1 = GeneralizedEquation(f, BoxNormalCone(box))
        g2 = GeneralizedEquation(f, PolyhedralNormalCone(box.to_polyhedron()))
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = np.clip(rng.uniform(-0.2, 1.2, 2), box.lower, box.upper)
            if rng.random() < 0.5:
                x[0] = rng.choice([0.0, 1.0])
            assert residual_distance(g1, x) == pytest.approx(residual_distance(g2, x), abs=1e-9)

    def test_orthant(self):
        ge = GeneralizedEquation(SmoothMap.identity(2), NonnegativeOrthant(2))
        # 0 in x + R_+^2 iff x <= 0
        assert residual_distance(ge, [-1.0, -2.0]) == 0.0
        assert residual_distance(ge, [1.0, -2.0]) == pytest.approx(1.0)

    def test_reference_checked(self):
        with pytest.raises(ValueError):
            GeneralizedEquation(SmoothMap.identity(1), ZeroMap(), reference_point=[1.0])

    def test_zero_at_reference(self):
        for fx in fixtures.newton_fixtures():
            assert residual_distance(fx.ge, fx.ge.reference_point) <= 1e-8

    def test_kkt_cone(self):
        C = KktCone(0, 1)
        assert C.as_box(3).lower.tolist() == [-np.inf, -np.inf, 0.0]
        with pytest.raises(ValueError):
            KktCone(2, 1)


class TestNaturalMap:
    def test_zero_f_interior(self):
        ge = GeneralizedEquation(SmoothMap.zero(2), BoxNormalCone(Box([0, 0], [1, 1])))
        np.testing.assert_allclose(natural_map(ge, [0.3, 0.9]), 0.0)

    def test_solution_checks(self):
        ge1 = scalar_ge(lambda x: x - 1, HALFLINE)
        assert natural_map(ge1, [1.0])[0] == 0.0
        ge2 = scalar_ge(lambda x: x + 2, HALFLINE)
        assert natural_map(ge2, [0.0])[0] == 0.0
        assert residual_distance(ge2, [0.0]) == 0.0

    def test_unsupported(self):
        with pytest.raises(TypeError):
            natural_map(fixtures.minus_x_x(), [0.0])

    @pytest.mark.parametrize("shift", [-2.0, -0.5, 0.0, 0.7])
    def test_zero_set_matches_inclusion_1d(self, shift):
        ge = scalar_ge(lambda x: x**2 + shift, BoxNormalCone(Box([-1.0], [1.0])))
        grid = np.linspace(-1, 1, 1001)
        for x in grid:
            phi = abs(natural_map(ge, [x])[0])
            r = residual_distance(ge, [x])
            assert (phi <= 1e-9) == (r <= 1e-9)

    def test_zero_set_matches_inclusion_2d(self):
        f = SmoothMap.linear([[2.0, 1.0], [1.0, 2.0]], [-1.0, 0.5])
        ge = GeneralizedEquation(f, BoxNormalCone(Box([0, 0], [1, 1])))
        g = np.linspace(0, 1, 41)
        pts = [np.array([a, b]) for a in g for b in g]
        sols = [0.5, 0.0]
        pts.append(np.array(sols))
        for x in pts:
            phi = np.max(np.abs(natural_map(ge, x)))
            assert (phi <= 1e-9) == (residual_distance(ge, x) <= 1e-9)
        assert residual_distance(ge, sols) <= 1e-12


class TestBJacobian:
    def test_interior_and_outside(self):
        f = SmoothMap.linear([[0.1, 0.0], [0.0, 0.2]])
        ge = GeneralizedEquation(f, BoxNormalCone(Box([-5, -5], [5, 5])))
        np.testing.assert_allclose(b_jacobian_natural_map(ge, [1.0, 1.0]), f.jacobian(None))
        ge2 = GeneralizedEquation(SmoothMap.linear(-np.eye(2), [-10, 10]), BoxNormalCone(Box([0, 0], [1, 1])))
        np.testing.assert_allclose(b_jacobian_natural_map(ge2, [0.5, 0.5]), np.eye(2))

    def test_mixed_rows_match_finite_differences(self):
        def fun(x):
            return np.array([x[0] ** 2 + x[1] - 3.0, np.sin(x[1]) + 0.1 * x[0]])

        ge = GeneralizedEquation(SmoothMap(fun, 2, 2), BoxNormalCone(Box([0, 0], [1, 1])))
        x = np.array([0.4, 0.6])
        J = b_jacobian_natural_map(ge, x)
        h = 1e-7
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (natural_map(ge, x + e) - natural_map(ge, x)) / h
            np.testing.assert_allclose(J[:, j], fd, atol=1e-5)
        # first row is a unit row (z_1 above the box), second keeps Df
        np.testing.assert_allclose(J[0], [1.0, 0.0])


class TestAvi:
    def test_free(self):
        z = avi_solve([[1.0]], [-1.0], ZeroMap(), [0.0])
        np.testing.assert_allclose(z, [1.0])

    def test_halfline(self):
        z = avi_solve([[1.0]], [1.0], HALFLINE, [5.0])
        np.testing.assert_allclose(z, [0.0])

    def test_no_solution(self):
        assert avi_solve([[0.0]], [1.0], BoxNormalCone(Box([-np.inf], [np.inf])), [0.0]) is None

    def test_f7_linearized_kkt(self):
        prob, pt = fixtures.f7()
        (M, c), C = linearized_kkt(prob, pt)
        zbar = np.r_[pt.x, pt.y]
        z = avi_solve(M, c, C, np.zeros(3))
        np.testing.assert_allclose(z, zbar, atol=1e-12)

    def test_lcp_against_brute_force(self):
        rng = np.random.default_rng(4)
        for _ in range(40):
            n = int(rng.integers(1, 5))
            B = rng.standard_normal((n, n))
            M = B @ B.T + 0.1 * np.eye(n)
            q = rng.standard_normal(n)
            C = BoxNormalCone(Box(np.zeros(n), np.full(n, np.inf)))
            z = avi_solve(M, q, C, np.zeros(n))
            ref = lcp_brute(M, q)
            assert len(ref) == 1
            np.testing.assert_allclose(z, ref[0], atol=1e-9)
            ge = GeneralizedEquation(SmoothMap.linear(M, q), C)
            assert residual_distance(ge, z) <= 1e-9

    def test_nearest_selection(self):
        # 0 in z^2-type piecewise: M = 0 on [-1, 1] with q = 0 has every z as a solution
        z = avi_solve([[0.0]], [0.0], BoxNormalCone(Box([-1.0], [1.0])), [0.3])
        np.testing.assert_allclose(z, [0.3])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_substitution_property(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 4))
        M = rng.standard_normal((n, n)) + 2 * n * np.eye(n)
        q = rng.standard_normal(n)
        box = Box(-rng.uniform(0, 1, n), rng.uniform(0, 1, n))
        C = BoxNormalCone(box)
        z = avi_solve(M, q, C, np.zeros(n))
        assert z is not None
        ge = GeneralizedEquation(SmoothMap.linear(M, q), C)
        assert residual_distance(ge, z) <= 1e-9
