import numpy as np
import pytest
import scipy.linalg as sla

from impedbench.errors import InvalidInputError, NumericalFailureError
from impedbench.linalg import (
    GramMatrix,
    as_complex_matrix,
    gram_operator_norm,
    numerical_rank,
    solve_pencil,
    svd,
)


def rng():
    return np.random.default_rng(1234)


class TestGramMatrix:
    def test_identity(self):
        g = GramMatrix.identity(3)
        assert g.dim == 3
        assert g.is_identity
        assert g.inner([1, 0, 0], [1, 0, 0]) == pytest.approx(1.0)

    def test_cholesky_reproduces_matrix(self):
        r = rng()
        a = r.standard_normal((4, 4)) + 1j * r.standard_normal((4, 4))
        g = GramMatrix(a @ a.conj().T + 4 * np.eye(4))
        rec = g.chol_upper.conj().T @ g.chol_upper
        assert np.linalg.norm(rec - g.matrix) <= 1e-12 * np.linalg.norm(g.matrix)

    def test_rejects_non_hermitian(self):
        with pytest.raises(InvalidInputError):
            GramMatrix(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_rejects_indefinite(self):
        with pytest.raises(InvalidInputError):
            GramMatrix(np.diag([1.0, -1.0]))

    def test_norm_matches_inner(self):
        g = GramMatrix(np.diag([1.0, 4.0]))
        v = np.array([1.0, 1.0])
        assert g.norm_of(v) == pytest.approx(np.sqrt(5.0))
        assert g.inner(v, v) == pytest.approx(5.0)

    def test_orthonormalize(self):
        r = rng()
        g = GramMatrix(np.diag([1.0, 2.0, 3.0, 4.0]))
        b = r.standard_normal((4, 2)) + 1j * r.standard_normal((4, 2))
        q = g.orthonormalize(b)
        gram = q.conj().T @ g.matrix @ q
        assert np.linalg.norm(gram - np.eye(2)) < 1e-12


class TestSvd:
    def test_diagonal_values(self):
        u, s, vh = svd(np.diag([3.0, 2.0, 1.0]))
        assert np.allclose(s, [3.0, 2.0, 1.0])

    def test_reconstruction_random(self):
        r = rng()
        m = r.standard_normal((5, 3)) + 1j * r.standard_normal((5, 3))
        u, s, vh = svd(m)
        err = np.linalg.norm(u @ np.diag(s) @ vh - m)
        assert err <= 1e-10 * np.linalg.norm(m)
        assert np.linalg.norm(u.conj().T @ u - np.eye(3)) < 1e-12
        assert np.linalg.norm(vh @ vh.conj().T - np.eye(3)) < 1e-12

    def test_unitary_invariance(self):
        r = rng()
        m = r.standard_normal((6, 6)) + 1j * r.standard_normal((6, 6))
        q, _ = np.linalg.qr(r.standard_normal((6, 6)) + 1j * r.standard_normal((6, 6)))
        s1 = svd(m)[1]
        s2 = svd(q @ m)[1]
        assert np.allclose(s1, s2, rtol=1e-12, atol=1e-12)

    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            svd(np.zeros((0, 0)))


class TestSolvePencil:
    def test_diagonal_identity(self):
        out = solve_pencil(np.diag([1.0, 2.0, 3.0]), np.eye(3))
        assert np.allclose(sorted(out.values.real), [1.0, 2.0, 3.0])
        assert np.allclose(out.values.imag, 0.0, atol=1e-14)
        assert out.cond_b == pytest.approx(1.0)

    def test_hermitian_pair_real_spectrum(self):
        r = rng()
        a = r.standard_normal((5, 5)) + 1j * r.standard_normal((5, 5))
        a = a + a.conj().T
        b = r.standard_normal((5, 5)) + 1j * r.standard_normal((5, 5))
        b = b @ b.conj().T + 5 * np.eye(5)
        out = solve_pencil(a, b)
        assert np.max(np.abs(out.values.imag)) < 1e-9
        # independent route: eigh on the same pair
        ref = sla.eigh(a, b, eigvals_only=True)
        assert np.allclose(np.sort(out.values.real), ref, atol=1e-9)

    def test_residuals_reported(self):
        r = rng()
        a = r.standard_normal((4, 4)) + 1j * r.standard_normal((4, 4))
        out = solve_pencil(a, np.eye(4))
        assert out.residuals.max() <= 1e-8

    def test_singular_rhs_rejected(self):
        with pytest.raises(InvalidInputError, match="condition"):
            solve_pencil(np.eye(3), np.diag([1.0, 1.0, 0.0]))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            solve_pencil(np.eye(3), np.eye(4))

    def test_sorted_deterministic(self):
        r = rng()
        a = r.standard_normal((6, 6))
        out1 = solve_pencil(a, np.eye(6))
        out2 = solve_pencil(a.copy(), np.eye(6))
        assert np.array_equal(out1.values, out2.values)


class TestNumericalRank:
    def test_outer_product(self):
        u = np.arange(1.0, 5.0)
        assert numerical_rank(np.outer(u, u)) == 1

    def test_zero_matrix(self):
        assert numerical_rank(np.zeros((3, 3))) == 0

    def test_identity(self):
        assert numerical_rank(np.eye(7)) == 7

    def test_monotone_in_tol(self):
        r = rng()
        m = r.standard_normal((8, 8)) @ np.diag(10.0 ** -np.arange(8.0)) @ r.standard_normal((8, 8))
        tols = [1e-12, 1e-8, 1e-4, 1e-2, 1e-1]
        ranks = [numerical_rank(m, t) for t in tols]
        assert ranks == sorted(ranks, reverse=True)

    def test_rejects_bad_tol(self):
        with pytest.raises(InvalidInputError):
            numerical_rank(np.eye(2), 0.0)


class TestGramOperatorNorm:
    def test_scalar_example(self):
        # map x -> 2x from a space where ||1|| = 2 into one where ||1|| = 1
        n = gram_operator_norm(
            np.array([[2.0]]), GramMatrix(np.array([[4.0]])), GramMatrix.identity(1)
        )
        assert n == pytest.approx(1.0)

    def test_identity_grams_spectral_norm(self):
        r = rng()
        m = r.standard_normal((5, 4)) + 1j * r.standard_normal((5, 4))
        n = gram_operator_norm(m, GramMatrix.identity(4), GramMatrix.identity(5))
        assert n == pytest.approx(np.linalg.norm(m, 2), rel=1e-12)

    def test_dominates_rayleigh_samples(self):
        r = rng()
        m = r.standard_normal((4, 4)) + 1j * r.standard_normal((4, 4))
        gi = GramMatrix(np.diag([1.0, 2.0, 3.0, 4.0]))
        go = GramMatrix(np.diag([2.0, 1.0, 1.0, 0.5]))
        bound = gram_operator_norm(m, gi, go)
        for _ in range(25):
            x = r.standard_normal(4) + 1j * r.standard_normal(4)
            assert go.norm_of(m @ x) <= bound * gi.norm_of(x) * (1 + 1e-12)

    def test_shape_guard(self):
        with pytest.raises(InvalidInputError):
            gram_operator_norm(np.eye(3), GramMatrix.identity(2), GramMatrix.identity(3))


class TestAsComplexMatrix:
    def test_rejects_nan(self):
        with pytest.raises(InvalidInputError):
            as_complex_matrix(np.array([[np.nan, 0.0]]))

    def test_vector_promoted_to_row(self):
        m = as_complex_matrix([1.0, 2.0])
        assert m.shape == (1, 2)
