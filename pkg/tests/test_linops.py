import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from demon_sim import linops
from demon_sim.errors import ConvergenceError

finite = st.floats(-3, 3, allow_nan=False)
mat3 = arrays(np.float64, (3, 3), elements=finite)


def cplx(a, b):
    return a + 1j * b


class TestVectorize:
    def test_column_stacking(self):
        m = np.arange(9).reshape(3, 3)
        np.testing.assert_array_equal(linops.vectorize(m), [0, 3, 6, 1, 4, 7, 2, 5, 8])

    def test_round_trip(self, rng):
        m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        np.testing.assert_array_equal(linops.devectorize(linops.vectorize(m)), m)

    @settings(max_examples=50, deadline=None)
    @given(mat3, mat3, mat3, mat3, mat3, mat3)
    def test_sandwich_identity(self, ar, ai, xr, xi, br, bi):
        a, x, b = cplx(ar, ai), cplx(xr, xi), cplx(br, bi)
        lhs = linops.vectorize(a @ x @ b)
        rhs = np.kron(b.T, a) @ linops.vectorize(x)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            linops.vectorize(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            linops.devectorize(np.zeros(8))

    def test_conjugation_super(self, rng):
        u = scipy.linalg.expm(-1j * (lambda h: h + h.conj().T)(rng.normal(size=(3, 3)) + 0j))
        rho = rng.normal(size=(3, 3))
        np.testing.assert_allclose(
            linops.devectorize(linops.conjugation_super(u) @ linops.vectorize(rho)),
            u @ rho @ u.conj().T,
            atol=1e-12,
        )

    def test_left_right(self, rng):
        a, x, b = (rng.normal(size=(3, 3)) for _ in range(3))
        np.testing.assert_allclose(linops.left_super(a) @ linops.vectorize(x), linops.vectorize(a @ x))
        np.testing.assert_allclose(linops.right_super(b) @ linops.vectorize(x), linops.vectorize(x @ b))


class TestExpm:
    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (9, 9), elements=st.floats(-20, 20)), arrays(np.float64, (9, 9), elements=st.floats(-20, 20)))
    def test_matches_scipy(self, re, im):
        a = cplx(re, im)
        ref = scipy.linalg.expm(a)
        np.testing.assert_allclose(linops.expm(a), ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())

    def test_zero_and_diagonal(self):
        np.testing.assert_allclose(linops.expm(np.zeros((4, 4))), np.eye(4))
        d = np.diag([1.0, -2.0, 0.5])
        np.testing.assert_allclose(linops.expm(d), np.diag(np.exp([1.0, -2.0, 0.5])), rtol=1e-14)

    def test_nilpotent(self):
        n = np.array([[0, 1.0], [0, 0]])
        np.testing.assert_allclose(linops.expm(n), [[1, 1], [0, 1]], atol=1e-15)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            linops.expm(np.array([[np.nan]]))

    def test_nonconvergence_reported(self):
        with pytest.raises(ConvergenceError):
            linops.expm(np.eye(3), max_terms=2)

    def test_hermitian_path(self, rng):
        h = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        h = h + h.conj().T
        u = linops.expm_hermitian_generator(h, -0.7j)
        np.testing.assert_allclose(u, scipy.linalg.expm(-0.7j * h), atol=1e-12)
        np.testing.assert_allclose(u @ u.conj().T, np.eye(3), atol=1e-12)

    def test_non_hermitian_falls_back(self, rng):
        a = rng.normal(size=(3, 3))
        np.testing.assert_allclose(linops.expm_hermitian_generator(a, 0.3), scipy.linalg.expm(0.3 * a), atol=1e-12)


class TestTraceAndChoi:
    def test_trace_of_vectorized(self, rng):
        m = rng.normal(size=(3, 3))
        assert linops.trace_of_vectorized(linops.vectorize(m)) == pytest.approx(np.trace(m))
        np.testing.assert_allclose(linops.trace_row(3) @ linops.vectorize(m), np.trace(m))

    def test_hs_inner(self, rng):
        a, b = rng.normal(size=(3, 3)) + 1j, rng.normal(size=(3, 3))
        assert linops.hs_inner(a, b) == pytest.approx(np.trace(a.conj().T @ b))
        with pytest.raises(ValueError):
            linops.hs_inner(np.eye(2), np.eye(3))

    def test_choi_of_identity_is_unnormalized_bell(self):
        choi = linops.choi_matrix(np.eye(9))
        omega = np.eye(3).reshape(-1)
        np.testing.assert_allclose(choi, np.outer(omega, omega))

    def test_choi_of_transpose_is_not_positive(self):
        swap = np.zeros((9, 9))
        for i in range(3):
            for j in range(3):
                swap[j + 3 * i, i + 3 * j] = 1
        assert np.linalg.eigvalsh(linops.choi_matrix(swap)).min() < -0.5

    def test_is_hermitian(self):
        assert linops.is_hermitian(np.array([[1, 1j], [-1j, 2]]))
        assert not linops.is_hermitian(np.array([[1, 1j], [1j, 2]]))
