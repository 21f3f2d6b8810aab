import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpip.errors import DenominatorUnderflow, EigenFailure, NotPositiveDefinite
from gpip.numerics import (
    BlockDiagonal,
    cholesky_factor,
    hermitian_sqrt,
    hermitize,
    rank1_inverse_update,
    solve_hermitian,
)


def random_pd(rng, n, ridge=0.5):
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return hermitize(m @ m.conj().T) + ridge * np.eye(n)


def random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    m = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return hermitize(m @ m.conj().T)


class TestCholesky:
    def test_identity(self):
        np.testing.assert_allclose(cholesky_factor(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        np.testing.assert_allclose(
            cholesky_factor(np.diag([4.0, 9.0])), np.diag([2.0, 3.0])
        )

    def test_reconstructs_random_pd(self):
        # oracle: L L^H must rebuild the input to 1e-10 of its largest entry
        rng = np.random.default_rng(42)
        m = random_pd(rng, 8)
        low = cholesky_factor(m)
        err = np.abs(low @ low.conj().T - m).max()
        assert err < 1e-10 * np.abs(m).max()
        assert np.allclose(np.triu(low, 1), 0)

    def test_rejects_indefinite(self):
        m = np.diag([1.0, -1.0])
        with pytest.raises(NotPositiveDefinite):
            cholesky_factor(m)

    def test_rejects_tiny_pivot(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky_factor(np.diag([1.0, 1e-13]))

    def test_bit_reproducible(self):
        rng = np.random.default_rng(7)
        m = random_pd(rng, 6)
        a = cholesky_factor(m)
        b = cholesky_factor(m.copy())
        assert np.array_equal(a, b)


class TestSolveHermitian:
    def test_identity(self):
        v = np.array([1.0 + 2j, -3.0])
        np.testing.assert_allclose(solve_hermitian(np.eye(2), v), v)

    def test_diagonal(self):
        x = solve_hermitian(np.diag([2.0, 4.0]), np.array([2.0, 4.0]))
        np.testing.assert_allclose(x, [1.0, 1.0])

    def test_residual_random_system(self):
        rng = np.random.default_rng(3)
        m = random_pd(rng, 6)
        rhs = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        x = solve_hermitian(m, rhs)
        assert np.linalg.norm(m @ x - rhs) < 1e-8 * np.linalg.norm(rhs)

    def test_propagates_not_pd(self):
        with pytest.raises(NotPositiveDefinite):
            solve_hermitian(np.zeros((2, 2)), np.ones(2))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 10))
    def test_solve_then_multiply_is_identity(self, seed, n):
        rng = np.random.default_rng(seed)
        m = random_pd(rng, n)
        rhs = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        x = solve_hermitian(m, rhs)
        assert np.linalg.norm(m @ x - rhs) <= 1e-8 * max(1.0, np.linalg.norm(rhs))


class TestRank1InverseUpdate:
    def test_analytic_identity_update(self):
        e1 = np.array([1.0, 0.0])
        out = rank1_inverse_update(np.eye(2), e1, 1.0)
        np.testing.assert_allclose(out, np.diag([0.5, 1.0]), atol=1e-14)

    def test_zero_vector_is_noop(self):
        out = rank1_inverse_update(np.eye(4), np.zeros(4), 1.0)
        np.testing.assert_allclose(out, np.eye(4))

    def test_chain_matches_direct_inverse(self):
        # oracle: accumulate M = I + sum c_i u_i u_i^H and invert directly
        rng = np.random.default_rng(11)
        n = 4
        inv = np.eye(n, dtype=complex)
        m = np.eye(n, dtype=complex)
        for _ in range(4):
            u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            c = float(rng.uniform(0.1, 2.0))
            inv = rank1_inverse_update(inv, u, c)
            m = m + c * np.outer(u, u.conj())
        assert np.abs(inv - np.linalg.inv(m)).max() < 1e-8

    def test_long_chain_well_conditioned(self):
        rng = np.random.default_rng(5)
        n, k = 16, 16
        inv = np.eye(n, dtype=complex)
        m = np.eye(n, dtype=complex)
        for _ in range(k):
            u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            c = float(rng.uniform(0.05, 1.0))
            inv = rank1_inverse_update(inv, u, c)
            m = m + c * np.outer(u, u.conj())
        assert np.abs(inv - np.linalg.inv(m)).max() < 1e-8

    def test_denominator_underflow(self):
        # a crafted non-PSD "inverse" drives 1/c + u^H inv u to zero
        inv = np.array([[-1.0 + 0j]])
        with pytest.raises(DenominatorUnderflow):
            rank1_inverse_update(inv, np.array([1.0 + 0j]), 1.0)

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError):
            rank1_inverse_update(np.eye(2), np.ones(2), 0.0)


class TestHermitianSqrt:
    def test_identity(self):
        np.testing.assert_allclose(hermitian_sqrt(np.eye(3)), np.eye(3))

    def test_psd_with_null_direction(self):
        np.testing.assert_allclose(
            hermitian_sqrt(np.diag([4.0, 0.0])), np.diag([2.0, 0.0]), atol=1e-12
        )

    def test_reconstructs_seeded_psd(self):
        rng = np.random.default_rng(9)
        m = random_psd(rng, 6)
        s = hermitian_sqrt(m)
        assert np.abs(s @ s.conj().T - m).max() < 1e-8

    def test_clips_small_negative_eigenvalues(self):
        rng = np.random.default_rng(2)
        m = random_psd(rng, 5, rank=2)  # numerically rank deficient
        s = hermitian_sqrt(m)
        assert np.abs(s @ s.conj().T - m).max() < 1e-8
        assert np.all(np.linalg.eigvalsh(hermitize(s)) > -1e-10)

    def test_eigen_failure_surfaces(self):
        bad = np.full((3, 3), np.nan)
        with pytest.raises(EigenFailure):
            hermitian_sqrt(bad)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 8))
    def test_sqrt_times_adjoint_reproduces_input(self, seed, n):
        rng = np.random.default_rng(seed)
        m = random_psd(rng, n)
        s = hermitian_sqrt(m)
        assert np.abs(s @ s.conj().T - m).max() <= 1e-8 * max(1.0, np.abs(m).max())


class TestBlockDiagonal:
    def test_matvec_and_quad_match_dense(self):
        rng = np.random.default_rng(1)
        blocks = np.stack([random_pd(rng, 3) for _ in range(4)])
        bd = BlockDiagonal(blocks)
        f = rng.standard_normal(12) + 1j * rng.standard_normal(12)
        dense = bd.dense()
        np.testing.assert_allclose(bd.matvec(f), dense @ f)
        assert bd.quad(f) == pytest.approx(np.real(f.conj() @ dense @ f))

    def test_solve_uses_blocks(self):
        rng = np.random.default_rng(4)
        blocks = np.stack([random_pd(rng, 2) for _ in range(3)])
        bd = BlockDiagonal(blocks)
        f = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        x = bd.solve(f)
        assert np.linalg.norm(bd.matvec(x) - f) < 1e-9
