"""Direct compressed-sensing baseline: operator oracle and recovery checks."""

import numpy as np
import pytest

from cpchan.channel_sim import assemble_all, sample_channel, sample_channel_on_grid
from cpchan.cs_baseline import PilotKronOperator, assemble_problem, solve_cs
from cpchan.measurement import simulate
from cpchan.sparse_solver import (
    AngleGrid,
    FistaConfig,
    adjoint_mismatch,
    build_dictionary,
)
from cpchan.tensor_core import ComplexTensor3
from cpchan.training_design import build_design


def tiny_design(seed=0, n_bs=8, n_ms=4, m_bs=4, t_prime=3, t=2, users=2):
    rng = np.random.default_rng(seed)
    return build_design(rng, n_bs, n_ms, m_bs, t_prime, t, [1] * users)


class TestPilotKronOperator:
    def test_matches_dense_kronecker(self):
        design = tiny_design()
        grid = AngleGrid(4, 4)
        op = PilotKronOperator(design, grid)
        dense = np.kron(design.S, build_dictionary(design, grid))
        assert op.shape == dense.shape
        rng = np.random.default_rng(1)
        x = rng.standard_normal(op.shape[1]) + 1j * rng.standard_normal(op.shape[1])
        y = rng.standard_normal(op.shape[0]) + 1j * rng.standard_normal(op.shape[0])
        np.testing.assert_allclose(op.matvec(x), dense @ x, atol=1e-11)
        np.testing.assert_allclose(op.rmatvec(y), dense.conj().T @ y, atol=1e-11)
        np.testing.assert_allclose(op.column_norms(),
                                   np.linalg.norm(dense, axis=0), atol=1e-11)

    def test_unit_vector_extracts_column(self):
        design = tiny_design(seed=2)
        grid = AngleGrid(4, 4)
        op = PilotKronOperator(design, grid)
        dense = np.kron(design.S, build_dictionary(design, grid))
        for k in np.random.default_rng(3).choice(op.shape[1], size=5, replace=False):
            e = np.zeros(op.shape[1], dtype=np.complex128)
            e[k] = 1.0
            np.testing.assert_allclose(op.matvec(e), dense[:, k], atol=1e-12)

    def test_adjoint(self):
        design = tiny_design(seed=4, m_bs=6, t_prime=5, t=3, users=3)
        op = PilotKronOperator(design, AngleGrid(6, 5))
        assert adjoint_mismatch(op, np.random.default_rng(5)) < 1e-10


class TestAssembleProblem:
    def test_noiseless_measurement_in_operator_range(self):
        # the stacked measurement must equal the operator applied to the
        # true on-grid coefficient vector
        grid = AngleGrid(16, 8)
        rng = np.random.default_rng(6)
        channel = sample_channel_on_grid(rng, 2, (1, 1), 16, 8,
                                         grid.sin_aoa, grid.sin_aod)
        design = build_design(rng, 16, 8, 8, 8, 2, (1, 1))
        meas = simulate(channel, design, None)
        prob = assemble_problem(meas, design, grid)
        # build the true coefficient vector from the paths
        d = np.zeros(prob.operator.shape[1], dtype=np.complex128)
        for u, paths in enumerate(channel.users):
            for p in paths:
                i = int(np.argmin(np.abs(grid.sin_aoa - np.sin(p.aoa))))
                j = int(np.argmin(np.abs(grid.sin_aod - np.sin(p.aod))))
                d[u * grid.size + j * grid.n_aoa + i] = p.gain
        np.testing.assert_allclose(prob.operator.matvec(d), prob.y,
                                   rtol=1e-9, atol=1e-12)
        assert prob.noise_std == 0.0

    def test_zero_tensor_gives_zero_vector(self):
        from cpchan.measurement import MeasurementTensor

        design = tiny_design(seed=7)
        zero = MeasurementTensor(
            ComplexTensor3(np.zeros((design.m_bs, design.t_prime, design.t), complex)))
        prob = assemble_problem(zero, design, AngleGrid(4, 4))
        np.testing.assert_array_equal(prob.y, 0)


class TestSolveCs:
    def test_noiseless_on_grid_exact(self):
        grid = AngleGrid(32, 16)
        rng = np.random.default_rng(8)
        channel = sample_channel_on_grid(rng, 2, (1, 1), 16, 8,
                                         grid.sin_aoa, grid.sin_aod)
        design = build_design(rng, 16, 8, 16, 16, 2, (1, 1))
        meas = simulate(channel, design, None)
        prob = assemble_problem(meas, design, grid)
        res = solve_cs(prob, FistaConfig(lam=1e-8 * np.linalg.norm(prob.y),
                                         max_iters=5000, tol=1e-15),
                       channel_truth=channel)
        assert res.nmse_total < 1e-4
        # each user carries one on-grid path; the support must find it
        H_true = assemble_all(channel)
        for u in range(2):
            assert res.supports[u].size >= 1
            assert res.nmse_per_user[u] < 1e-4
        assert res.runtime_s > 0

    def test_noisy_run_returns_finite_estimates(self):
        grid = AngleGrid(16, 8)
        rng = np.random.default_rng(9)
        channel = sample_channel(rng, 2, (1, 2), 16, 8)
        design = build_design(rng, 16, 8, 8, 8, 2, (1, 2))
        meas = simulate(channel, design, 20.0, rng)
        prob = assemble_problem(meas, design, grid)
        res = solve_cs(prob, lambda_scale=1.0, channel_truth=channel)
        assert np.isfinite(res.nmse_total)
        assert res.iterations > 0
        assert all(np.all(np.isfinite(H)) for H in res.channels)

    def test_no_truth_leaves_nmse_none(self):
        grid = AngleGrid(8, 8)
        rng = np.random.default_rng(10)
        channel = sample_channel(rng, 2, (1, 1), 16, 8)
        design = build_design(rng, 16, 8, 6, 5, 2, (1, 1))
        meas = simulate(channel, design, 10.0, rng)
        res = solve_cs(assemble_problem(meas, design, grid),
                       FistaConfig(lam=0.1, max_iters=50))
        assert res.nmse_total is None and res.nmse_per_user is None
