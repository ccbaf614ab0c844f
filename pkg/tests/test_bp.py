import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bspdetect import _kernels
from bspdetect.bp import (
    MessageGrid,
    alpha_update,
    beta_update_full,
    bit_llrs,
    initial_grid,
    run_ebrdf_bp,
    run_original_bp,
    strongest_edges,
    symbol_llrs,
)
from bspdetect.channel import draw_instance
from bspdetect.linear import product_table
from bspdetect.modem import build_constellation, symbol_to_bit_llrs


def close(a, b, rel=1e-12):
    a, b = np.asarray(a), np.asarray(b)
    return np.all(np.abs(a - b) <= rel * max(1.0, np.abs(b).max()))


def scratch_iteration(y, H, sigma2, c, alpha):
    """One flooding iteration written directly from the message definitions."""
    n_r, n_t = H.shape
    A = c.size
    beta = np.zeros((n_r, n_t, A))
    for i in range(n_r):
        for j in range(n_t):
            best = np.full(A, -np.inf)
            for ks in itertools.product(range(A), repeat=n_t):
                s = c.points[list(ks)]
                v = -abs(y[i] - H[i] @ s) ** 2 / (2 * sigma2)
                v += sum(alpha[t, i, ks[t]] for t in range(n_t) if t != j)
                best[ks[j]] = max(best[ks[j]], v)
            beta[i, j] = best - best[0]
    new_alpha = np.zeros_like(alpha)
    for j in range(n_t):
        for i in range(n_r):
            new_alpha[j, i] = sum(beta[t, j] for t in range(n_r) if t != i)
    return beta, new_alpha


def sweep_once(inst, sigma2, c, alpha):
    pt = product_table(inst.H, c)
    m = _kernels.row_metrics(inst.y, pt, 0.5 / sigma2)
    beta = np.zeros((inst.H.shape[0], inst.H.shape[1], c.size))
    _kernels.obp_beta(m, alpha, beta)
    return beta


class TestBetaUpdate:
    def test_single_symbol_closed_form(self, rng):
        c = build_constellation(4)
        inst = draw_instance(rng, 3, 1, c, 0.2)
        pt = product_table(inst.H, c)
        alpha = rng.normal(size=(1, 3, 16))
        for i in range(3):
            beta = beta_update_full(i, 0, inst.y[i], pt, alpha, 0.2)
            d = np.abs(inst.y[i] - inst.H[i, 0] * c.points) ** 2
            np.testing.assert_allclose(beta, (d[0] - d) / 0.4, rtol=1e-12, atol=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_matches_scratch_2x2_qpsk(self, seed):
        rng = np.random.default_rng(seed)
        c = build_constellation(2)
        inst = draw_instance(rng, 2, 2, c, 0.3)
        alpha = rng.normal(size=(2, 2, 4))
        alpha[:, :, 0] = 0
        want, _ = scratch_iteration(inst.y, inst.H, 0.3, c, alpha)
        pt = product_table(inst.H, c)
        for i, j in itertools.product(range(2), range(2)):
            assert close(beta_update_full(i, j, inst.y[i], pt, alpha, 0.3), want[i, j])
        assert close(sweep_once(inst, 0.3, c, alpha), want)

    @pytest.mark.parametrize("n_r,n_t,M", [(3, 3, 2), (2, 2, 4), (4, 1, 4), (2, 4, 2)])
    def test_kernel_matches_per_edge_reference(self, rng, n_r, n_t, M):
        c = build_constellation(M)
        inst = draw_instance(rng, n_r, n_t, c, 0.15)
        alpha = rng.normal(scale=3, size=(n_t, n_r, c.size))
        alpha[:, :, 0] = 0
        pt = product_table(inst.H, c)
        got = sweep_once(inst, 0.15, c, alpha)
        for i, j in itertools.product(range(n_r), range(n_t)):
            assert close(got[i, j], beta_update_full(i, j, inst.y[i], pt, alpha, 0.15))

    def test_reference_component_zero(self, rng):
        c = build_constellation(4)
        inst = draw_instance(rng, 2, 3, c, 0.5)
        pt = product_table(inst.H, c)
        alpha = rng.normal(size=(3, 2, 16))
        assert beta_update_full(1, 2, inst.y[1], pt, alpha, 0.5)[0] == 0.0
        assert np.all(sweep_once(inst, 0.5, c, alpha)[:, :, 0] == 0.0)


class TestAlphaAndGamma:
    def test_zero_beta(self):
        grid = alpha_update(MessageGrid.zeros(3, 2, 4))
        assert np.all(grid.alpha == 0)
        assert np.all(symbol_llrs(grid) == 0)

    def test_single_factor(self, rng):
        grid = MessageGrid(np.zeros((2, 1, 4)), rng.normal(size=(1, 2, 4)))
        np.testing.assert_array_equal(alpha_update(grid).alpha, 0)
        np.testing.assert_array_equal(symbol_llrs(grid), grid.beta[0])

    @given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 5))
    def test_leave_one_out_identity(self, seed, n_r, n_t):
        rng = np.random.default_rng(seed)
        beta = rng.normal(size=(n_r, n_t, 4))
        beta[:, :, 0] = 0
        grid = alpha_update(MessageGrid(np.zeros((n_t, n_r, 4)), beta))
        gamma = np.array([[sum(beta[i, j, k] for i in range(n_r)) for k in range(4)] for j in range(n_t)])
        assert np.allclose(symbol_llrs(grid), gamma, rtol=1e-13, atol=1e-13)
        for i, j in itertools.product(range(n_r), range(n_t)):
            assert np.allclose(grid.alpha[j, i] + beta[i, j], gamma[j], rtol=1e-13, atol=1e-13)
            loo = sum(beta[t, j] for t in range(n_r) if t != i) if n_r > 1 else np.zeros(4)
            assert np.allclose(grid.alpha[j, i], loo, atol=1e-12)
        assert np.all(grid.alpha[:, :, 0] == 0)

    def test_bit_llrs_consistent(self, rng):
        c = build_constellation(4)
        gamma = rng.normal(size=(3, 16))
        out = bit_llrs(gamma, c)
        np.testing.assert_array_equal(out.r, symbol_to_bit_llrs(gamma, c))
        np.testing.assert_array_equal(out.hard_bits, (out.r > 0).astype(np.uint8).ravel())


class TestOriginalBp:
    def test_single_antenna_single_iteration(self, rng):
        c = build_constellation(4)
        inst = draw_instance(rng, 1, 1, c, 0.1)
        out = run_original_bp(inst.y, inst.H, 0.1, c, 1)
        d = np.abs(inst.y[0] - inst.H[0, 0] * c.points) ** 2 / 0.2
        np.testing.assert_allclose(out.r, symbol_to_bit_llrs((d[0] - d)[None], c), rtol=1e-12, atol=1e-12)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_matches_scratch_iterations(self, seed, q):
        rng = np.random.default_rng(seed)
        c = build_constellation(2)
        inst = draw_instance(rng, 2, 2, c, 0.4)
        alpha = np.zeros((2, 2, 4))
        for _ in range(q):
            beta, alpha = scratch_iteration(inst.y, inst.H, 0.4, c, alpha)
        out, grid = run_original_bp(inst.y, inst.H, 0.4, c, q, return_grid=True)
        assert close(grid.beta, beta)
        assert close(grid.alpha, alpha)
        assert close(out.r, symbol_to_bit_llrs(beta.sum(axis=0), c))

    def test_invariants_over_many_iterations(self, rng):
        c = build_constellation(4)
        for sigma2 in (1e-6, 1e-3, 1.0):
            inst = draw_instance(rng, 4, 2, c, sigma2)
            out, grid = run_original_bp(inst.y, inst.H, sigma2, c, 32, return_grid=True)
            assert np.all(np.isfinite(grid.alpha)) and np.all(np.isfinite(grid.beta))
            assert np.all(grid.alpha[:, :, 0] == 0) and np.all(grid.beta[:, :, 0] == 0)
            assert np.all(np.isfinite(out.r))

    def test_noiseless_decodes(self, rng):
        c = build_constellation(2)
        for _ in range(10):
            inst = draw_instance(rng, 8, 4, c, 0.0)
            np.testing.assert_array_equal(run_original_bp(inst.y, inst.H, 1e-6, c, 10).hard_bits, inst.s_bits)

    def test_rejects_zero_iterations(self, rng):
        c = build_constellation(2)
        with pytest.raises(ValueError):
            run_original_bp(np.zeros(2), np.eye(2), 0.1, c, 0)

    def test_lmmse_init_replicates_prior(self, rng):
        c = build_constellation(4)
        inst = draw_instance(rng, 8, 4, c, 0.1)
        grid = initial_grid(inst.y, inst.H, 0.1, c, "lmmse")
        assert np.all(grid.alpha == grid.alpha[:, :1, :])
        assert np.all(grid.beta == 0)
        with pytest.raises(ValueError):
            initial_grid(inst.y, inst.H, 0.1, c, "bogus")

    def test_custom_grid_is_copied(self, rng):
        c = build_constellation(2)
        inst = draw_instance(rng, 2, 2, c, 0.3)
        start = MessageGrid.zeros(2, 2, 4)
        run_original_bp(inst.y, inst.H, 0.3, c, 2, init=start)
        assert np.all(start.alpha == 0)
        with pytest.raises(ValueError):
            run_original_bp(inst.y, inst.H, 0.3, c, 2, init=MessageGrid.zeros(3, 2, 4))


class TestEbrdf:
    def test_full_degree_equals_original(self, rng):
        c = build_constellation(4)
        for _ in range(5):
            inst = draw_instance(rng, 4, 3, c, 0.2)
            a = run_original_bp(inst.y, inst.H, 0.2, c, 4)
            b = run_ebrdf_bp(inst.y, inst.H, 0.2, c, 4, 3)
            assert close(b.r, a.r)

    def test_degree_one_invariants(self, rng):
        c = build_constellation(4)
        inst = draw_instance(rng, 8, 4, c, 0.05)
        out, grid = run_ebrdf_bp(inst.y, inst.H, 0.05, c, 10, 1, return_grid=True)
        assert np.all(np.isfinite(out.r))
        assert np.all(grid.beta[:, :, 0] == 0)
        kept = strongest_edges(inst.H, 1)
        for i in range(8):
            pruned = [t for t in range(4) if t not in kept[i]]
            assert np.all(grid.beta[i, pruned] == 0)

    def test_strongest_edges(self):
        H = np.array([[0.1, 3, -2, 0.5], [1, 1, 0.2, 1]])
        np.testing.assert_array_equal(strongest_edges(H, 2), [[1, 2], [0, 1]])

    @pytest.mark.parametrize("d_f", [0, 5])
    def test_bad_degree(self, rng, d_f):
        with pytest.raises(ValueError):
            run_ebrdf_bp(np.zeros(2), np.ones((2, 4)), 0.1, build_constellation(2), 2, d_f)
