"""Training artifacts: P/Q/S/O construction, coherence, k-rank, uniqueness."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from itertools import combinations

from cpchan.channel_sim import sample_channel
from cpchan.training_design import (
    TrainingDesign,
    build_design,
    check_uniqueness,
    design_from_dict,
    design_to_dict,
    dft_matrix,
    expansion_matrix,
    krank,
    krank_partitioned,
    load_design,
    minimize_coherence,
    mutual_coherence,
    pilot_matrix,
    random_unit_modulus,
    save_design,
    welch_bound,
)


class TestRandomUnitModulus:
    def test_single_entry_on_unit_circle(self):
        M = random_unit_modulus(np.random.default_rng(0), 1, 1, 1.0)
        assert abs(abs(M[0, 0]) - 1.0) < 1e-14

    def test_constant_modulus_at_scale(self):
        M = random_unit_modulus(np.random.default_rng(1), 64, 16, 1.0 / 64)
        np.testing.assert_allclose(np.abs(M), 1.0 / 64, atol=1e-15)

    def test_zero_mean_monte_carlo(self):
        M = random_unit_modulus(np.random.default_rng(2), 100, 1000, 1.0)
        assert abs(M.mean()) < 3 / np.sqrt(M.size)


class TestPilotMatrix:
    def test_square_is_unitary_dft(self):
        S = pilot_matrix(np.random.default_rng(0), 4, 4)
        np.testing.assert_allclose(S.conj().T @ S, np.eye(4), atol=1e-12)
        assert mutual_coherence(S) < 1e-12

    def test_t2_u2_orthonormal(self):
        S = pilot_matrix(np.random.default_rng(0), 2, 2)
        np.testing.assert_allclose(S.conj().T @ S, np.eye(2), atol=1e-12)

    def test_t2_u8_near_optimal_coherence(self):
        # 8 unit vectors in C^2 map to 8 points on the sphere of complex
        # lines; the best possible coherence is cos(gamma/2) for the optimal
        # 8-point sphere packing angle gamma ~ 74.86 deg, i.e. ~0.794 --
        # well above the (unachievable here) Welch bound of ~0.655.
        S = pilot_matrix(np.random.default_rng(0), 2, 8)
        mu = mutual_coherence(S)
        assert welch_bound(2, 8) == pytest.approx(np.sqrt(6 / 14))
        assert mu <= 0.82

    def test_unit_columns(self):
        for t, u in [(2, 8), (4, 8), (4, 4), (8, 4)]:
            S = pilot_matrix(np.random.default_rng(1), t, u)
            assert S.shape == (t, u)
            np.testing.assert_allclose(np.linalg.norm(S, axis=0), 1.0, atol=1e-9)

    def test_t_below_two_rejected(self):
        with pytest.raises(ValueError):
            pilot_matrix(np.random.default_rng(0), 1, 4)

    def test_coherence_bounds(self):
        S = minimize_coherence(np.random.default_rng(3), 3, 7, iters=100, restarts=3)
        assert 0.0 <= mutual_coherence(S) <= 1.0


class TestExpansionMatrix:
    def test_block_structure(self):
        O = expansion_matrix((1, 2, 2))
        assert O.shape == (3, 5)
        assert np.all(O.sum(axis=0) == 1)          # one 1 per column
        np.testing.assert_array_equal(O.sum(axis=1), [1, 2, 2])
        # contiguous blocks
        np.testing.assert_array_equal(O[0], [1, 0, 0, 0, 0])
        np.testing.assert_array_equal(O[1], [0, 1, 1, 0, 0])
        np.testing.assert_array_equal(O[2], [0, 0, 0, 1, 1])

    def test_pilot_replication(self):
        rng = np.random.default_rng(4)
        S = pilot_matrix(rng, 4, 3)
        d = TrainingDesign(
            P=random_unit_modulus(rng, 8, 8, 1 / 8),
            Q=random_unit_modulus(rng, 16, 8, 1 / 16),
            S=S,
            O=expansion_matrix((1, 2, 2)),
        )
        S_L = d.S_L
        np.testing.assert_allclose(S_L[:, 0], S[:, 0], atol=1e-15)
        np.testing.assert_allclose(S_L[:, 1], S[:, 1], atol=1e-15)
        np.testing.assert_allclose(S_L[:, 2], S[:, 1], atol=1e-15)
        np.testing.assert_allclose(S_L[:, 3], S[:, 2], atol=1e-15)
        np.testing.assert_allclose(S_L[:, 4], S[:, 2], atol=1e-15)


class TestKrank:
    def test_identity(self):
        assert krank(np.eye(4)) == 4

    def test_repeated_column(self):
        M = np.ones((3, 1)) @ np.ones((1, 2))
        M = np.hstack([np.eye(3)[:, :1], np.eye(3)[:, :1], np.eye(3)[:, 1:2]])
        assert krank(M) == 1

    def test_random_tall_full_krank(self):
        rng = np.random.default_rng(5)
        M = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
        assert krank(M) == 4

    def test_zero_matrix(self):
        assert krank(np.zeros((3, 3))) == 0

    def test_wide_matrix(self):
        rng = np.random.default_rng(6)
        M = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
        assert krank(M) == 3  # generic: every 3 columns independent

    def test_matches_exhaustive_oracle(self):
        # independent exhaustive-subset oracle
        def oracle(M):
            n = M.shape[1]
            smax = np.linalg.svd(M, compute_uv=False)[0]
            if smax == 0:
                return 0
            k = 0
            for size in range(1, n + 1):
                ok = True
                for cols in combinations(range(n), size):
                    sub = M[:, list(cols)]
                    s = np.linalg.svd(sub, compute_uv=False)
                    if len(cols) > M.shape[0] or s[-1] <= 1e-9 * smax:
                        ok = False
                        break
                if not ok:
                    break
                k = size
            return k

        rng = np.random.default_rng(7)
        for _ in range(50):
            m, n = rng.integers(2, 7, size=2)
            M = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
            if rng.random() < 0.3 and n >= 2:  # plant a dependency sometimes
                M[:, -1] = M[:, 0] * (1 + 1j)
            assert krank(M) == oracle(M)


class TestKrankPartitioned:
    def test_singleton_blocks_reduce_to_krank(self):
        rng = np.random.default_rng(8)
        M = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
        assert krank_partitioned(M, [1, 1, 1, 1]) == krank(M)

    def test_scaled_duplicate_block(self):
        rng = np.random.default_rng(9)
        B = rng.standard_normal((6, 2)) + 1j * rng.standard_normal((6, 2))
        M = np.hstack([B, 2.5 * B])
        assert krank_partitioned(M, [2, 2]) == 1

    def test_full_rank_blocks(self):
        rng = np.random.default_rng(10)
        M = rng.standard_normal((8, 6)) + 1j * rng.standard_normal((8, 6))
        assert krank_partitioned(M, [2, 2, 2]) == 3

    def test_bad_partition(self):
        with pytest.raises(ValueError):
            krank_partitioned(np.eye(4), [2, 3])


class TestCheckUniqueness:
    def test_multi_path_operating_point(self):
        rng = np.random.default_rng(11)
        paths = (1, 1, 1, 2, 2, 2, 2, 2)   # 13 paths over 8 users
        ch = sample_channel(rng, 8, paths, 64, 32)
        d = build_design(rng, n_bs=64, n_ms=32, m_bs=16, t_prime=16, t=4, paths_per_user=paths)
        rep = check_uniqueness(d, ch)
        assert rep.regime == "multi_path"
        assert rep.dimension_ok          # 16*16 = 256 >= sum L_u^2 = 23
        assert rep.passed

    def test_single_frame_fails(self):
        rng = np.random.default_rng(12)
        ch = sample_channel(rng, 4, (1, 1, 1, 1), 16, 8)
        d = TrainingDesign(
            P=random_unit_modulus(rng, 8, 8, 1 / 8),
            Q=random_unit_modulus(rng, 16, 8, 1 / 16),
            S=np.ones((1, 4), dtype=complex) / 1.0,
            O=expansion_matrix((1, 1, 1, 1)),
        )
        rep = check_uniqueness(d, ch)
        assert rep.k_s == 1
        assert not rep.passed

    def test_single_path_random_design_passes(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            paths = (1,) * 8
            ch = sample_channel(rng, 8, paths, 64, 32)
            d = build_design(rng, 64, 32, m_bs=16, t_prime=16, t=4, paths_per_user=paths)
            rep = check_uniqueness(d, ch)
            assert rep.regime == "single_path"
            assert rep.passed

    def test_krank_of_projected_steering_is_user_count(self):
        # random constant-modulus combining preserves generic independence
        rng = np.random.default_rng(14)
        wins = 0
        for _ in range(100):
            paths = (1,) * 8
            ch = sample_channel(rng, 8, paths, 64, 32)
            d = build_design(rng, 64, 32, 16, 16, 4, paths)
            rep = check_uniqueness(d, ch)
            wins += rep.k_aq == 8
        assert wins >= 99


class TestDesignInvariants:
    def test_constant_modulus_invariant(self):
        rng = np.random.default_rng(15)
        d = build_design(rng, 16, 8, 8, 8, 4, (1, 1, 2))
        np.testing.assert_allclose(np.abs(d.P), 1 / 8, atol=1e-15)
        np.testing.assert_allclose(np.abs(d.Q), 1 / 16, atol=1e-15)

    def test_bad_expansion_rejected(self):
        rng = np.random.default_rng(16)
        with pytest.raises(ValueError):
            TrainingDesign(
                P=random_unit_modulus(rng, 8, 8, 1 / 8),
                Q=random_unit_modulus(rng, 16, 8, 1 / 16),
                S=pilot_matrix(rng, 4, 2),
                O=np.array([[1.0, 1.0], [1.0, 0.0]]),  # column with two ones
            )

    @settings(max_examples=20, deadline=None)
    @given(t=st.integers(2, 6), u=st.integers(2, 8))
    def test_coherence_in_unit_interval(self, t, u):
        S = pilot_matrix(np.random.default_rng(17), t, u)
        assert 0.0 <= mutual_coherence(S) <= 1.0 + 1e-12


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(18)
        d = build_design(rng, 16, 8, 8, 8, 4, (1, 2, 2))
        d2 = design_from_dict(design_to_dict(d))
        np.testing.assert_allclose(d.P, d2.P, atol=1e-15)
        np.testing.assert_allclose(d.S_L, d2.S_L, atol=1e-15)
        f = tmp_path / "design.json"
        save_design(d, f)
        d3 = load_design(f)
        np.testing.assert_allclose(d.Q, d3.Q, atol=1e-15)
