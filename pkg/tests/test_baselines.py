import numpy as np
import pytest

from gpip import baselines
from gpip.errors import RankDeficient


def random_channels(rng, k, n, scale=1.0):
    return scale * (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))) / np.sqrt(2)


def total_power(f):
    return float(np.sum(np.abs(f) ** 2))


def leakage(est, f):
    """Largest cross-user received amplitude |est_k^H f_i|, i != k."""
    inner = np.abs(est.conj() @ f.T)
    np.fill_diagonal(inner, 0.0)
    return inner.max()


class TestMrt:
    def test_single_user_normalization(self):
        f = baselines.mrt(np.array([[3.0 + 0j, 4.0]]))
        np.testing.assert_allclose(f, [[0.6, 0.8]])

    def test_orthogonal_equal_norm_channels_split_power_evenly(self):
        est = np.eye(3, dtype=complex)
        f = baselines.mrt(est)
        np.testing.assert_allclose(np.sum(np.abs(f) ** 2, axis=1), 1.0 / 3)

    def test_columns_collinear_with_estimates(self):
        rng = np.random.default_rng(0)
        est = random_channels(rng, 4, 6)
        f = baselines.mrt(est)
        for k in range(4):
            cos = abs(np.vdot(f[k], est[k])) / (np.linalg.norm(f[k]) * np.linalg.norm(est[k]))
            assert cos > 1 - 1e-12


class TestZf:
    def test_orthonormal_channels(self):
        est = np.eye(3, dtype=complex)
        f = baselines.zf(est)
        np.testing.assert_allclose(f, est / np.sqrt(3))

    def test_single_user_is_matched_filter_direction(self):
        rng = np.random.default_rng(1)
        est = random_channels(rng, 1, 4)
        f = baselines.zf(est)
        cos = abs(np.vdot(f[0], est[0])) / (np.linalg.norm(f[0]) * np.linalg.norm(est[0]))
        assert cos > 1 - 1e-12

    def test_interference_nulled(self):
        rng = np.random.default_rng(2)
        est = random_channels(rng, 3, 4)
        f = baselines.zf(est)
        assert leakage(est, f) < 1e-9
        assert total_power(f) == pytest.approx(1.0, abs=1e-10)

    def test_rank_deficient_raises(self):
        est = np.array([[1.0 + 0j, 0.0], [1.0 + 0j, 0.0]])
        with pytest.raises(RankDeficient):
            baselines.zf(est)
        with pytest.raises(RankDeficient):
            baselines.zf(random_channels(np.random.default_rng(0), 5, 4))


class TestRzfRrzf:
    def test_large_ridge_limit_is_mrt(self):
        rng = np.random.default_rng(3)
        est = random_channels(rng, 3, 4)
        f = baselines.rzf(est, 1e9)
        m = baselines.mrt(est)
        for k in range(3):
            cos = abs(np.vdot(f[k], m[k])) / (np.linalg.norm(f[k]) * np.linalg.norm(m[k]))
            assert cos > 1 - 1e-4

    def test_small_ridge_limit_is_zf(self):
        rng = np.random.default_rng(4)
        est = random_channels(rng, 3, 4)
        f = baselines.rzf(est, 1e-9)
        assert leakage(est, f) < 1e-4

    def test_rzf_equals_rrzf_with_zero_covariances(self):
        rng = np.random.default_rng(5)
        est = random_channels(rng, 3, 4)
        a = baselines.rzf(est, 0.2)
        b = baselines.rrzf(est, np.zeros((3, 4, 4)), 0.2)
        c = baselines.rrzf(est, None, 0.2)
        assert np.array_equal(a, c)
        np.testing.assert_allclose(a, b, atol=1e-15)

    def test_huge_error_covariance_limit_is_mrt(self):
        rng = np.random.default_rng(6)
        est = random_channels(rng, 3, 4)
        cov = np.broadcast_to(1e9 * np.eye(4), (3, 4, 4))
        f = baselines.rrzf(est, cov, 0.1)
        m = baselines.mrt(est)
        for k in range(3):
            cos = abs(np.vdot(f[k], m[k])) / (np.linalg.norm(f[k]) * np.linalg.norm(m[k]))
            assert cos > 1 - 1e-4

    def test_solve_residual_oracle(self):
        # oracle: the unnormalized beams X satisfy (G + sum Phi + ridge) X = est
        rng = np.random.default_rng(7)
        k, n = 3, 4
        est = random_channels(rng, k, n)
        cov = np.empty((k, n, n), dtype=complex)
        for i in range(k):
            m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            cov[i] = 0.1 * (m @ m.conj().T)
        nr = 0.3
        f = baselines.rrzf(est, cov, nr)
        lhs = est.T @ est.conj() + cov.sum(axis=0) + nr * np.eye(n)
        # recover the pre-normalization scale from any nonzero entry
        x = np.linalg.solve(lhs, est.T)
        scale = np.linalg.norm(x.T)
        assert np.abs(lhs @ (f.T * scale) - est.T).max() < 1e-8


class TestWaterfill:
    def test_equal_gains_split_evenly(self):
        p = baselines.waterfill([2.0, 2.0], 1.0, 0.5)
        np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-12)

    def test_extreme_gains_winner_takes_all(self):
        p = baselines.waterfill([1e12, 1e-12], 0.1, 1.0)
        assert p[0] == pytest.approx(0.1, abs=1e-9)
        assert p[1] == 0.0

    def test_sum_constraint_and_kkt(self):
        rng = np.random.default_rng(8)
        gains = rng.uniform(0.05, 5.0, size=8)
        nv = 0.7
        p = baselines.waterfill(gains, 2.0, nv)
        assert p.sum() == pytest.approx(2.0, abs=1e-10)
        levels = nv / gains + p
        active = p > 0
        mu = levels[active].mean()
        assert np.abs(levels[active] - mu).max() < 1e-8
        assert np.all(nv / gains[~active] >= mu - 1e-8)

    def test_beats_random_feasible_allocations(self):
        # oracle: objective sum log(1 + p g / nv) over random simplex points
        rng = np.random.default_rng(9)
        gains = rng.uniform(0.1, 3.0, size=8)
        nv = 0.4
        total = 1.0
        p_star = baselines.waterfill(gains, total, nv)
        best = np.sum(np.log1p(p_star * gains / nv))
        random_ps = rng.dirichlet(np.ones(8), size=100_000) * total
        objs = np.sum(np.log1p(random_ps * gains / nv), axis=1)
        assert best >= objs.max() - 1e-9


class TestSusZf:
    def test_single_user(self):
        rng = np.random.default_rng(10)
        est = random_channels(rng, 1, 3)
        selected, f = baselines.sus_zf(est, 0.5)
        assert selected == [0]
        cos = abs(np.vdot(f[0], est[0])) / (np.linalg.norm(f[0]) * np.linalg.norm(est[0]))
        assert cos > 1 - 1e-10

    def test_identical_channels_pick_one(self):
        h = np.array([1.0 + 0.5j, -0.2j, 0.3])
        est = np.stack([h, h])
        selected, _ = baselines.sus_zf(est, 0.99)
        assert len(selected) == 1

    def test_matches_reference_pseudocode(self):
        # independent re-implementation of the published greedy selection
        def sus_reference(est, alpha):
            k = est.shape[0]
            t_set = list(range(k))
            s_set = []
            basis = []
            while t_set and len(s_set) < est.shape[1]:
                norms = []
                for i in t_set:
                    g = est[i].copy()
                    for b in basis:
                        g = g - (b.conj() @ est[i]) * b
                    norms.append((np.linalg.norm(g), i, g))
                norms.sort(key=lambda x: (-x[0], x[1]))
                best_norm, best_i, best_g = norms[0]
                if best_norm <= 1e-12:
                    break
                s_set.append(best_i)
                b_new = best_g / best_norm
                basis.append(b_new)
                t_set = [
                    i
                    for i in t_set
                    if i != best_i
                    and abs(est[i].conj() @ b_new) / np.linalg.norm(est[i]) <= alpha
                ]
            return s_set

        for seed in range(20):
            rng = np.random.default_rng(seed)
            est = random_channels(rng, 4, 2)
            selected, _ = baselines.sus_zf(est, 0.3)
            assert selected == sus_reference(est, 0.3)

    def test_power_feasible(self):
        rng = np.random.default_rng(11)
        est = random_channels(rng, 6, 4)
        _, f = baselines.sus_zf(est, 0.4)
        assert total_power(f) <= 1 + 1e-10


class TestZfDpc:
    def test_orthogonal_equal_gain_channels(self):
        g = 2.0
        est = np.sqrt(g) * np.eye(3, dtype=complex)
        nv = 0.5
        ordering, powers, rate = baselines.zf_dpc_waterfilling(est, nv)
        np.testing.assert_allclose(powers, 1.0 / 3, atol=1e-10)
        assert rate == pytest.approx(3 * np.log2(1 + g / (3 * nv)))

    def test_single_user_capacity(self):
        h = np.array([[1.0 + 1j, 2.0 - 1j]])
        nv = 0.3
        _, _, rate = baselines.zf_dpc_waterfilling(h, nv)
        assert rate == pytest.approx(np.log2(1 + np.linalg.norm(h) ** 2 / nv))

    def test_dominates_zf_with_waterfilling(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            est = random_channels(rng, 4, 4)
            nv = 0.2
            _, _, dpc_rate = baselines.zf_dpc_waterfilling(est, nv)
            dirs = baselines._zf_directions(est)
            gains = np.abs(np.einsum("kn,kn->k", est.conj(), dirs)) ** 2
            p = baselines.waterfill(gains, 1.0, nv)
            zf_rate = np.sum(np.log2(1 + p * gains / nv))
            assert dpc_rate >= zf_rate - 1e-9


class TestRankAdaptiveZf:
    def test_single_user(self):
        rng = np.random.default_rng(12)
        est = random_channels(rng, 1, 3)
        selected, f = baselines.rank_adaptive_zf(est, 0.5)
        assert selected == [0]
        assert total_power(f) == pytest.approx(1.0)

    def test_orthogonal_strong_channels_at_high_snr_both_selected(self):
        est = np.array([[2.0 + 0j, 0.0], [0.0, 2.0 + 0j]])
        selected, _ = baselines.rank_adaptive_zf(est, 1e-4)
        assert sorted(selected) == [0, 1]

    def test_identical_channels_pick_one(self):
        h = np.array([1.0 + 0j, 0.5j])
        est = np.stack([h, h])
        selected, _ = baselines.rank_adaptive_zf(est, 0.1)
        assert len(selected) == 1

    def test_never_decreases_rate(self):
        rng = np.random.default_rng(13)
        for seed in range(10):
            rng = np.random.default_rng(seed)
            est = random_channels(rng, 5, 4)
            nv = 0.3
            selected, f = baselines.rank_adaptive_zf(est, nv)
            # selected-set rate must beat the best single user
            best_single = np.log2(1 + np.max(np.linalg.norm(est, axis=1)) ** 2 / nv)
            gains = np.abs(np.einsum("kn,kn->k", est[selected].conj(),
                                     baselines._zf_directions(est[selected]))) ** 2
            rate = np.sum(np.log2(1 + gains / (len(selected) * nv)))
            assert rate >= best_single - 1e-9


class TestPowerFeasibility:
    def test_all_baselines_within_budget(self):
        rng = np.random.default_rng(14)
        est = random_channels(rng, 4, 6)
        cov = np.broadcast_to(0.1 * np.eye(6), (4, 6, 6)).copy()
        for f in (
            baselines.mrt(est),
            baselines.zf(est),
            baselines.rzf(est, 0.1),
            baselines.rrzf(est, cov, 0.1),
            baselines.sus_zf(est, 0.1)[1],
            baselines.rank_adaptive_zf(est, 0.1)[1],
        ):
            assert total_power(f) <= 1 + 1e-10
