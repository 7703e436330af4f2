import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subreg.numerics import CapExceeded
from subreg.polyhedral import (
    Box,
    Polyhedron,
    cone_is_trivial,
    critical_cone,
    enumerate_faces,
    lp_solve,
    normal_cone_at,
    polyhedral_cone,
    project_box,
    project_polyhedron,
    tangent_cone_at,
)
from oracles import grid_lp_min, grid_projection

SIMPLEX = Polyhedron.from_constraints(2, A=[[1, 1], [-1, 0], [0, -1]], b=[1, 0, 0])


class TestBox:
    def test_projection_cases(self):
        np.testing.assert_array_equal(project_box([0.5], Box([0], [1])), [0.5])
        np.testing.assert_array_equal(project_box([2, -3], Box([0, 0], [1, 1])), [1, 0])
        np.testing.assert_array_equal(project_box([0], Box([0], [1])), [0])

    def test_invalid_bounds(self):
        with pytest.raises(ValueError):
            Box([1.0], [0.0])
        with pytest.raises(ValueError):
            project_box([1.0, 2.0], Box([0], [1]))

    def test_to_polyhedron_roundtrip(self):
        box = Box([0, -np.inf, 2], [1, 3, 2])
        P = box.to_polyhedron()
        assert P.n_eq == 1 and P.n_ineq == 3
        assert P.contains([0.5, -10, 2]) and not P.contains([0.5, 4, 2])


class TestProjection:
    def test_interior_fixed(self):
        np.testing.assert_allclose(project_polyhedron([0.2, 0.3], SIMPLEX), [0.2, 0.3])

    def test_halfspace(self):
        P = Polyhedron.from_constraints(2, A=[[1, 0]], b=[1])
        np.testing.assert_allclose(project_polyhedron([2, 0], P), [1, 0])

    def test_simplex_against_grid(self):
        z = project_polyhedron([1, 1], SIMPLEX)
        np.testing.assert_allclose(z, [0.5, 0.5], atol=1e-12)
        ref = grid_projection(np.array([1.0, 1.0]), SIMPLEX.A, SIMPLEX.b)
        assert np.linalg.norm(z - ref) <= 2e-3

    def test_infeasible(self):
        P = Polyhedron.from_constraints(1, A=[[1], [-1]], b=[0, -1])
        with pytest.raises(ValueError):
            project_polyhedron([0.0], P)

    def test_cap(self):
        P = Polyhedron.from_constraints(13)
        with pytest.raises(CapExceeded):
            project_polyhedron(np.zeros(13), P)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_idempotent_and_optimal(self, seed):
        rng = np.random.default_rng(seed)
        n, m = 3, int(rng.integers(1, 6))
        A = rng.standard_normal((m, n))
        x0 = rng.standard_normal(n)
        P = Polyhedron.from_constraints(n, A=A, b=A @ x0 + rng.uniform(0, 1, m))
        x = 3 * rng.standard_normal(n)
        z = project_polyhedron(x, P)
        assert P.contains(z, tol=1e-9)
        np.testing.assert_allclose(project_polyhedron(z, P), z, atol=1e-12)
        # variational inequality: <x - z, w - z> <= 0 for feasible w
        for _ in range(20):
            w = x0 + 0.3 * rng.standard_normal(n)
            if P.contains(w):
                assert (x - z) @ (w - z) <= 1e-8


class TestCones:
    def test_normal_cone_whole_space(self):
        N = normal_cone_at(Polyhedron.whole_space(2), [3.0, -1.0])
        assert N.is_zero()

    def test_normal_cone_halfline(self):
        P = Polyhedron.from_constraints(1, A=[[-1]], b=[0])
        N = normal_cone_at(P, [0.0])
        np.testing.assert_allclose(N.generators, [[-1.0]])

    def test_normal_cone_outside(self):
        assert normal_cone_at(SIMPLEX, [2.0, 2.0]) is None

    def test_normal_cone_simplex_vertex_polarity(self):
        N = normal_cone_at(SIMPLEX, [1.0, 0.0])
        gens = {tuple(np.round(g, 12)) for g in N.generators.T}
        assert gens == {(1.0, 1.0), (0.0, -1.0)}
        T = tangent_cone_at(SIMPLEX, [1.0, 0.0])
        rng = np.random.default_rng(0)
        hits = 0
        for d in rng.standard_normal((4000, 2)):
            if T.contains(d):
                hits += 1
                assert np.all(N.generators.T @ d <= 1e-8)
        assert hits >= 100

    def test_critical_cone_trivial(self):
        K = critical_cone(Polyhedron.whole_space(3), np.zeros(3), np.zeros(3))
        assert K.n_ineq == 0 and K.n_eq == 0

    def test_critical_cone_halfline(self):
        P = Polyhedron.from_constraints(1, A=[[-1]], b=[0])
        K = critical_cone(P, [0.0], [0.0])
        assert K.contains([1.0]) and not K.contains([-1.0])

    def test_critical_cone_orthant(self):
        P = Polyhedron.from_constraints(2, A=-np.eye(2), b=[0, 0])
        K = critical_cone(P, [0.0, 0.0], [-1.0, 0.0])
        rng = np.random.default_rng(1)
        for d in rng.standard_normal((200, 2)):
            expected = d[1] >= 0 and abs(d[0]) <= 1e-12
            assert K.contains(d) == expected
        assert K.contains([0.0, 1.0]) and not K.contains([1.0, 1.0])

    def test_critical_cone_rejects_non_normal(self):
        P = Polyhedron.from_constraints(1, A=[[-1]], b=[0])
        with pytest.raises(ValueError):
            critical_cone(P, [0.0], [1.0])

    def test_cone_is_trivial(self):
        assert cone_is_trivial(None, (-np.eye(2)).tolist() + [[1, 1]], 2)
        assert not cone_is_trivial(None, -np.eye(2), 2)
        assert cone_is_trivial(np.eye(2), None, 2)
        # dependent rows: a line survives
        assert not cone_is_trivial(None, [[-1, -1], [1, 1]], 2)


class TestFaces:
    def test_orthant(self):
        faces = enumerate_faces(polyhedral_cone(2, A=-np.eye(2)))
        assert sorted(f.dim for f in faces) == [0, 1, 1, 2]

    def test_half_line_in_plane(self):
        faces = enumerate_faces(polyhedral_cone(2, A=[[0, -1]], E=[[1, 0]]))
        assert len(faces) == 2

    def test_redundant_constraint(self):
        faces = enumerate_faces(polyhedral_cone(2, A=[[-1, 0], [0, -1], [-1, -1]]))
        assert len(faces) == 4
        assert len({f.active_inequalities for f in faces}) == 4

    def test_cover_samples(self):
        K = polyhedral_cone(3, A=[[-1, 0, 0], [0, -1, 0], [1, 1, -1]])
        faces = enumerate_faces(K)
        for f in faces:
            np.testing.assert_allclose(f.span_basis.T @ f.span_basis, np.eye(f.dim), atol=1e-10)
            for i in f.active_inequalities:
                np.testing.assert_allclose(K.A[i] @ f.span_basis, 0, atol=1e-10)
        rng = np.random.default_rng(0)
        pats = {f.active_inequalities for f in faces}
        n = 0
        for x in rng.standard_normal((5000, 3)):
            if not K.contains(x):
                continue
            n += 1
            active = tuple(int(i) for i in np.flatnonzero(np.abs(K.A @ x) <= 1e-9))
            assert active in pats
        assert n > 100
        # nesting: larger active sets give smaller spans
        for f in faces:
            for g in faces:
                if set(f.active_inequalities) < set(g.active_inequalities):
                    assert g.dim <= f.dim

    def test_non_cone_rejected(self):
        with pytest.raises(ValueError):
            enumerate_faces(SIMPLEX)


class TestLP:
    def test_box_min(self):
        P = Polyhedron.from_constraints(1, A=[[1], [-1]], b=[1, 0])
        r = lp_solve([1.0], P)
        assert r.status == "optimal" and r.value == pytest.approx(0.0)

    def test_unbounded(self):
        P = Polyhedron.from_constraints(1, A=[[-1]], b=[0])
        assert lp_solve([1.0], P, sense="max").status == "unbounded"

    def test_infeasible(self):
        P = Polyhedron.from_constraints(1, A=[[1], [-1]], b=[0, -1])
        assert lp_solve([1.0], P).status == "infeasible"

    def test_against_grid(self):
        A = np.array([[-1.0, -1.0], [-1, 0], [0, -1]])
        b = np.array([-1.0, 0, 0])
        P = Polyhedron.from_constraints(2, A=A, b=b)
        r = lp_solve([1.0, 1.0], P)
        assert r.value == pytest.approx(1.0)
        assert abs(r.value - grid_lp_min(np.array([1.0, 1.0]), A, b)) <= 1e-6

    def test_random_2d_agree_with_highs_and_grid(self):
        rng = np.random.default_rng(11)
        for _ in range(15):
            A = rng.standard_normal((5, 2))
            b = rng.uniform(0.2, 1.0, 5)
            box = np.vstack([np.eye(2), -np.eye(2)])
            A = np.vstack([A, box])
            b = np.concatenate([b, np.full(4, 2.0)])
            P = Polyhedron.from_constraints(2, A=A, b=b)
            c = rng.standard_normal(2)
            r1 = lp_solve(c, P)
            r2 = lp_solve(c, P, method="highs")
            assert r1.value == pytest.approx(r2.value, abs=1e-8)
            assert r1.value <= grid_lp_min(c, A, b, -2.0, 2.0, 5e-3) + 1e-9

    def test_caps(self):
        P = Polyhedron.from_constraints(13)
        with pytest.raises(CapExceeded):
            lp_solve(np.zeros(13), P)
