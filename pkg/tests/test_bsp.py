import itertools
import logging
from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bspdetect import _kernels
from bspdetect.bp import beta_update_full, run_original_bp
from bspdetect.bsp import (
    BspConfig,
    TruncatedMessage,
    _pattern_table,
    beta_update_bsp,
    config_set_size,
    enumerate_config_set,
    run_bsp,
    truncate_alpha,
)
from bspdetect.channel import draw_instance
from bspdetect.linear import product_table
from bspdetect.modem import build_constellation


def close(a, b, rel=1e-12):
    a, b = np.asarray(a), np.asarray(b)
    return np.all(np.abs(a - b) <= rel * max(1.0, np.abs(b).max()))


def random_truncated(rng, n_interferers, size, d_m):
    return [truncate_alpha(rng.normal(size=size), d_m) for _ in range(n_interferers)]


class TestTruncate:
    def test_tie_break(self):
        # 1-based (2, 3), (4, 3) in the usual notation
        tm = truncate_alpha([0, 3, -1, 3], 2)
        assert tm.indices == (1, 3) and tm.llrs == (3.0, 3.0)

    def test_single(self, rng):
        a = rng.normal(size=16)
        assert truncate_alpha(a, 1).indices == (int(np.argmax(a)),)

    @given(st.lists(st.integers(-3, 3), min_size=1, max_size=16), st.integers(1, 20))
    def test_against_naive_sort(self, values, d_m):
        tm = truncate_alpha(np.array(values, float), d_m)
        naive = sorted(range(len(values)), key=lambda k: (-values[k], k))[: min(d_m, len(values))]
        assert list(tm.indices) == naive
        assert len(tm) == min(d_m, len(values))
        assert all(a >= b for a, b in zip(tm.llrs, tm.llrs[1:]))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            truncate_alpha([0.0, np.nan], 1)


class TestConfigSet:
    @pytest.mark.parametrize("d_m,d_f", [(1, 3), (3, 1), (1, 1)])
    def test_single_assignment_all_top1(self, rng, d_m, d_f):
        tms = random_truncated(rng, 3, 16, max(d_m, 1))
        out = list(enumerate_config_set(tms, d_m, d_f))
        # duplicates across chosen-edge subsets are kept, so count by the law
        assert len(out) == config_set_size(4, d_m, d_f)
        assert set(out) == {tuple(tm.indices[0] for tm in tms)}

    def test_hand_enumeration(self):
        tms = [TruncatedMessage((5, 2), (1.0, 0.5)), TruncatedMessage((7, 1), (2.0, 0.0))]
        assert list(enumerate_config_set(tms, 2, 2)) == [(5, 7), (2, 7), (5, 7), (5, 1)]
        assert config_set_size(3, 2, 2) == 4

    def test_full_set(self, rng):
        tms = random_truncated(rng, 2, 4, 4)
        out = list(enumerate_config_set(tms, 4, 3))
        assert sorted(out) == sorted(itertools.product(range(4), repeat=2))

    def test_cardinality_law_exhaustive(self):
        for n_t in range(1, 7):
            for d_m in range(1, 5):
                for d_f in range(1, n_t + 1):
                    tms = [TruncatedMessage(tuple(range(d_m)), (0.0,) * d_m)] * (n_t - 1)
                    count = sum(1 for _ in enumerate_config_set(tms, d_m, d_f))
                    assert count == comb(n_t - 1, d_f - 1) * d_m ** (d_f - 1) == config_set_size(n_t, d_m, d_f)

    @given(st.integers(2, 5), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_nesting(self, n_t, d_m, d_f, seed):
        d_f = min(d_f, n_t)
        tms = random_truncated(np.random.default_rng(seed), n_t - 1, 16, 4)
        small = set(enumerate_config_set(tms, d_m, d_f))
        for d_m2 in range(d_m, 5):
            for d_f2 in range(d_f, n_t + 1):
                assert small <= set(enumerate_config_set(tms, d_m2, d_f2))

    def test_d_f_out_of_range(self):
        tms = [TruncatedMessage((0,), (0.0,))]
        with pytest.raises(ValueError):
            list(enumerate_config_set(tms, 1, 3))

    def test_pattern_table_read_only(self):
        table = _pattern_table(4, 2, 2)
        assert table.shape == (4, 6, 4)
        with pytest.raises(ValueError):
            table[0, 0, 0] = 1


class TestBetaUpdateBsp:
    def test_full_set_equals_exhaustive(self, rng):
        c = build_constellation(4)
        inst = draw_instance(rng, 3, 3, c, 0.2)
        pt = product_table(inst.H, c)
        alpha = rng.normal(size=(3, 3, 16))
        cfg = BspConfig(16, 3)
        for i, j in itertools.product(range(3), range(3)):
            tms = [truncate_alpha(alpha[t, i], 16) for t in range(3) if t != j]
            got = beta_update_bsp(i, j, inst.y[i], pt, tms, alpha, 0.2, cfg)
            assert close(got, beta_update_full(i, j, inst.y[i], pt, alpha, 0.2))

    def test_b11_two_symbols_by_hand(self):
        c = build_constellation(2)
        H = np.array([[1.0, 0.5j]])
        y = 0.3 + 0.2j
        sigma2 = 0.25
        alpha = np.zeros((2, 1, 4))
        alpha[1, 0] = [0.0, -1.0, 2.5, 0.4]  # interferer's most reliable symbol is index 2
        pt = product_table(H, c)
        got = beta_update_bsp(0, 0, y, pt, [truncate_alpha(alpha[1, 0], 1)], alpha, sigma2, BspConfig(1, 1))
        resid = y - 0.5j * c.points[2] - c.points
        want = (np.abs(resid[0]) ** 2 - np.abs(resid) ** 2) / (2 * sigma2)
        np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-14)
        assert got[0] == 0.0

    @pytest.mark.parametrize("d_m,d_f", [(1, 1), (2, 2), (3, 4), (4, 3), (16, 4)])
    def test_kernel_matches_reference(self, rng, d_m, d_f):
        c = build_constellation(4)
        inst = draw_instance(rng, 5, 4, c, 0.1)
        pt = product_table(inst.H, c)
        alpha = rng.normal(scale=4, size=(4, 5, 16))
        alpha[:, :, 0] = 0
        cfg = BspConfig(d_m, d_f)
        beta = np.zeros((5, 4, 16))
        _kernels.bsp_beta(inst.y, pt, alpha, 5.0, _pattern_table(4, d_m, d_f), d_m, beta)
        for i, j in itertools.product(range(5), range(4)):
            tms = [truncate_alpha(alpha[t, i], d_m) for t in range(4) if t != j]
            assert close(beta[i, j], beta_update_bsp(i, j, inst.y[i], pt, tms, alpha, 0.1, cfg))
        assert np.all(beta[:, :, 0] == 0)

    def test_kernel_tie_break_matches(self):
        c = build_constellation(2)
        H = np.ones((1, 2), complex)
        pt = product_table(H, c)
        alpha = np.zeros((2, 1, 4))
        alpha[0, 0] = [0, 1, 1, 1]
        alpha[1, 0] = [0, 0, 0, 0]
        beta = np.zeros((1, 2, 4))
        _kernels.bsp_beta(np.array([0.1j]), pt, alpha, 2.0, _pattern_table(2, 1, 1), 1, beta)
        for j in range(2):
            tms = [truncate_alpha(alpha[1 - j, 0], 1)]
            assert close(beta[0, j], beta_update_bsp(0, j, 0.1j, pt, tms, alpha, 0.25, BspConfig(1, 1)))


class TestRunBsp:
    def test_full_set_uniform_equals_original(self, rng):
        c = build_constellation(2)
        for _ in range(10):
            inst = draw_instance(rng, 3, 3, c, 0.3)
            a = run_original_bp(inst.y, inst.H, 0.3, c, 3)
            b = run_bsp(inst.y, inst.H, 0.3, c, BspConfig(4, 3, Q_L=3, init_mode="uniform"))
            assert close(b.r, a.r)

    def test_collapse(self, rng):
        c = build_constellation(4)
        inst = draw_instance(rng, 8, 4, c, 0.05)
        ref = run_bsp(inst.y, inst.H, 0.05, c, BspConfig(1, 1)).r
        for d in (2, 3, 4):
            assert np.array_equal(run_bsp(inst.y, inst.H, 0.05, c, BspConfig(d, 1)).r, ref)
            assert np.array_equal(run_bsp(inst.y, inst.H, 0.05, c, BspConfig(1, d)).r, ref)

    def test_clamping_warns(self, rng, caplog):
        c = build_constellation(2)
        inst = draw_instance(rng, 2, 2, c, 0.3)
        with caplog.at_level(logging.WARNING, logger="bspdetect.bsp"):
            big = run_bsp(inst.y, inst.H, 0.3, c, BspConfig(9, 5, init_mode="uniform"))
        assert sum("clamping" in r.message for r in caplog.records) == 2
        exact = run_bsp(inst.y, inst.H, 0.3, c, BspConfig(4, 2, init_mode="uniform"))
        np.testing.assert_array_equal(big.r, exact.r)

    def test_noiseless_lmmse_init(self, rng):
        c = build_constellation(4)
        for _ in range(10):
            inst = draw_instance(rng, 8, 4, c, 0.0)
            out = run_bsp(inst.y, inst.H, 1e-9, c, BspConfig(2, 2))
            np.testing.assert_array_equal(out.hard_bits, inst.s_bits)

    def test_grid_invariants(self, rng):
        c = build_constellation(4)
        inst = draw_instance(rng, 8, 4, c, 0.1)
        out, grid = run_bsp(inst.y, inst.H, 0.1, c, BspConfig(2, 3), return_grid=True)
        assert np.all(grid.alpha[:, :, 0] == 0) and np.all(grid.beta[:, :, 0] == 0)
        gamma = grid.beta.sum(axis=0)
        np.testing.assert_allclose(grid.alpha + grid.beta.transpose(1, 0, 2), np.broadcast_to(gamma[:, None, :], grid.alpha.shape), atol=1e-12)

    @pytest.mark.parametrize("kwargs", [dict(d_m=0, d_f=1), dict(d_m=1, d_f=0), dict(d_m=1, d_f=1, Q_L=0),
                                        dict(d_m=1, d_f=1, init_mode="zero")])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            BspConfig(**kwargs)

    def test_label(self):
        assert BspConfig(2, 2).label == "B(2,2)"
