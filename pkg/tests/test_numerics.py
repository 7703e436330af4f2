import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subreg.numerics import (
    CapExceeded,
    SingularMatrixError,
    as_matrix,
    inf_operator_norm,
    matrix_rank,
    nullspace_basis,
    range_basis,
    smallest_singular_value,
    solve_linear,
    spectral_norm,
    symmetric_eigen_extremes,
)
from oracles import sampled_min_stretch


class TestSolveLinear:
    def test_identity(self):
        np.testing.assert_allclose(solve_linear(np.eye(3), [1, 2, 3]), [1, 2, 3])

    def test_diagonal(self):
        np.testing.assert_allclose(solve_linear([[2, 0], [0, 4]], [2, 8]), [1, 2])

    def test_singular_flag(self):
        with pytest.raises(SingularMatrixError):
            solve_linear([[1, 2], [2, 4]], [1, 1])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            solve_linear(np.eye(2), [1, 2, 3])
        with pytest.raises(ValueError):
            solve_linear(np.ones((2, 3)), [1, 2])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            solve_linear([[np.nan, 0], [0, 1]], [1, 1])

    def test_residual_bound_random_well_conditioned(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = rng.integers(1, 9)
            Q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
            Q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
            s = np.logspace(0, -rng.uniform(0, 5.9), n)
            A = Q1 @ np.diag(s) @ Q2
            b = rng.standard_normal(n)
            x = solve_linear(A, b)
            assert np.linalg.norm(A @ x - b) <= 1e-10 * (1 + np.linalg.norm(b))


class TestNullspace:
    def test_single_constraint(self):
        Z = nullspace_basis([[1, 1]])
        assert Z.shape == (2, 1)
        np.testing.assert_allclose(np.abs(Z[:, 0]), [2**-0.5, 2**-0.5])
        assert Z[0, 0] * Z[1, 0] < 0

    def test_identity_empty(self):
        assert nullspace_basis(np.eye(2)).shape == (2, 0)

    def test_coordinate_hyperplane(self):
        A = np.array([[1.0, 0, 0]])
        Z = nullspace_basis(A)
        assert Z.shape == (3, 2)
        np.testing.assert_allclose(A @ Z, 0, atol=1e-12)
        np.testing.assert_allclose(Z.T @ Z, np.eye(2), atol=1e-12)

    def test_absolute_tolerance(self):
        A = np.array([[1.0, 0], [0, 1e-13]])
        assert nullspace_basis(A).shape[1] == 1  # relative rule already drops it
        assert matrix_rank(np.array([[1e-13]]), atol=1e-12) == 0
        assert matrix_rank(np.array([[1e-13]])) == 1

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_orthonormal_and_annihilated(self, m, n, seed):
        rng = np.random.default_rng(seed)
        r = min(m, n, int(rng.integers(0, min(m, n) + 1)))
        A = rng.standard_normal((m, r)) @ rng.standard_normal((r, n)) if r else np.zeros((m, n))
        Z = nullspace_basis(A)
        np.testing.assert_allclose(Z.T @ Z, np.eye(Z.shape[1]), atol=1e-10)
        np.testing.assert_allclose(A @ Z, 0, atol=1e-10)
        assert Z.shape[1] + range_basis(A).shape[1] == n


class TestSingularValues:
    def test_identity(self):
        s, v, u = smallest_singular_value(np.eye(4))
        assert s == pytest.approx(1.0)
        assert np.linalg.norm(v) == pytest.approx(1.0)

    @pytest.mark.parametrize("N", [3, 7, 20])
    def test_harmonic_diagonal(self, N):
        s, v, u = smallest_singular_value(np.diag(1.0 / np.arange(1, N + 1)))
        assert s == pytest.approx(1.0 / N, rel=1e-12)
        np.testing.assert_allclose(np.abs(v), np.eye(N)[-1], atol=1e-12)

    def test_against_sampling_oracle(self):
        A = np.random.default_rng(5).standard_normal((5, 3))
        s, v, u = smallest_singular_value(A)
        ref = sampled_min_stretch(A)
        assert ref >= s - 1e-12
        assert ref - s <= 1e-3
        np.testing.assert_allclose(A @ v, s * u, atol=1e-12)

    def test_wide_rejected(self):
        with pytest.raises(ValueError):
            smallest_singular_value(np.ones((2, 3)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_square_matches_gram_eigenvalue(self, n, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((n + int(rng.integers(0, 3)), n))
        s = smallest_singular_value(A)[0]
        lam = np.linalg.eigvalsh(A.T @ A)[0]
        assert s**2 == pytest.approx(lam, rel=1e-8, abs=1e-12)

    def test_norms(self):
        A = np.array([[1.0, -2.0], [3.0, 0.5]])
        assert spectral_norm(A) == pytest.approx(np.linalg.norm(A, 2))
        assert inf_operator_norm(A) == pytest.approx(3.5)


class TestSymmetricEigen:
    def test_diagonal(self):
        lmin, vmin, lmax, vmax = symmetric_eigen_extremes(np.diag([2.0, 5.0]))
        assert (lmin, lmax) == (pytest.approx(2.0), pytest.approx(5.0))
        np.testing.assert_allclose(vmin, [1, 0], atol=1e-14)

    def test_two_by_two(self):
        A = np.array([[2.0, 1.0], [1.0, 2.0]])
        lmin, vmin, _, _ = symmetric_eigen_extremes(A)
        assert lmin == pytest.approx(1.0)
        np.testing.assert_allclose(A @ vmin, lmin * vmin, atol=1e-12)
        assert abs(vmin @ np.array([1, -1])) == pytest.approx(2**0.5)

    def test_zero(self):
        lmin, _, lmax, _ = symmetric_eigen_extremes(np.zeros((2, 2)))
        assert lmin == 0.0 and lmax == 0.0

    def test_nonsymmetric_rejected(self):
        with pytest.raises(ValueError):
            symmetric_eigen_extremes([[1.0, 2.0], [0.0, 1.0]])

    def test_rayleigh_quotients(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            B = rng.standard_normal((4, 4))
            A = B + B.T
            lmin, vmin, lmax, vmax = symmetric_eigen_extremes(A)
            assert vmin @ A @ vmin == pytest.approx(lmin, abs=1e-9)
            assert vmax @ A @ vmax == pytest.approx(lmax, abs=1e-9)


def test_cap_exceeded_message():
    err = CapExceeded("things", 3, 5)
    assert "things" in str(err) and err.limit == 3 and err.actual == 5


def test_as_matrix_rejects_inf():
    with pytest.raises(ValueError):
        as_matrix([[np.inf]])
