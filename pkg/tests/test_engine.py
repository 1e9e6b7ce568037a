import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaiht import (TRACE_CSV_COLUMNS, DimensionError, SparseVector, compute_M, derive_seed, effective_noise,
                    generate_design, gradient_map, iht_step, run_nonadaptive, sample_signal,
                    stopping_time_oracle, synthesize_instance, universal_threshold)
from oracles import iht_chain, phi_matrix, stopping_time_formula


def _instance(n, p, s, a, sigma, seed, kind="gaussian", magnitude="flat_a"):
    d = generate_design(kind, n, p, seed=derive_seed("X", seed))
    beta = sample_signal(p, s, a, magnitude, seed=derive_seed("b", seed))
    return synthesize_instance(d, beta, sigma, seed=derive_seed("xi", seed))


class TestGradientMap:
    def test_from_zero_is_M(self):
        inst = _instance(40, 25, 3, 1.0, 1.0, 0)
        np.testing.assert_array_equal(gradient_map(inst.design, inst.y, np.zeros(25)), compute_M(inst))

    def test_identity_noiseless(self):
        d = generate_design("identity_scaled", 16, 16)
        beta = sample_signal(16, 4, 1.0, "uniform", seed=3)
        y = synthesize_instance(d, beta, 0.0).y
        for seed in range(5):
            prev = np.random.default_rng(seed).standard_normal(16)
            np.testing.assert_allclose(gradient_map(d, y, prev), beta.to_dense(), atol=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(2, 50), st.integers(5, 60))
    def test_decomposition_explicit_phi(self, seed, p, n):
        # H - beta = Phi (beta - beta_prev) + Xi with Phi assembled explicitly
        inst = _instance(n, p, 1, 0.8, 0.5, seed)
        d = inst.design
        prev = np.random.default_rng(seed).standard_normal(p)
        beta = inst.beta_true.to_dense()
        H = gradient_map(d, inst.y, prev)
        rhs = phi_matrix(d.values) @ (beta - prev) + effective_noise(inst).xi_eff
        np.testing.assert_allclose(H - beta, rhs, atol=1e-10 * max(1.0, np.abs(rhs).max()))

    def test_dimension_errors(self):
        d = generate_design("gaussian", 5, 3)
        with pytest.raises(DimensionError):
            gradient_map(d, np.zeros(4), np.zeros(3))
        with pytest.raises(DimensionError):
            gradient_map(d, np.zeros(5), np.zeros(4))


class TestStep:
    def test_zero_threshold(self):
        inst = _instance(30, 12, 2, 1.0, 1.0, 1)
        prev = np.linspace(-1, 1, 12)
        np.testing.assert_array_equal(iht_step(inst.design, inst.y, prev, 0.0),
                                      gradient_map(inst.design, inst.y, prev))

    def test_huge_threshold(self):
        inst = _instance(30, 12, 2, 1.0, 1.0, 1)
        H = gradient_map(inst.design, inst.y, np.zeros(12))
        np.testing.assert_array_equal(iht_step(inst.design, inst.y, np.zeros(12), np.abs(H).max() * 1.01),
                                      np.zeros(12))

    def test_identity_one_step_recovery(self):
        d = generate_design("identity_scaled", 16, 16)
        beta = sample_signal(16, 5, 2.0, "uniform", seed=4)
        y = synthesize_instance(d, beta, 0.0).y
        np.testing.assert_array_equal(iht_step(d, y, np.zeros(16), 1.0), beta.to_dense())

    def test_identity_oracle_interval(self):
        # threshold between the largest off-support noise and the weakest
        # noisy signal gives the exact support in one step
        hits = 0
        for seed in range(50):
            d = generate_design("identity_scaled", 64, 64)
            beta = sample_signal(64, 4, 1.5, seed=seed)
            inst = synthesize_instance(d, beta, 1.0, seed=seed)
            xi = effective_noise(inst).xi_eff
            S = beta.support
            off = np.setdiff1d(np.arange(64), S)
            H = beta.to_dense() + xi
            lo, hi = np.abs(xi[off]).max(), np.abs(H[S]).min()
            if lo < hi:
                hits += 1
                out = iht_step(d, inst.y, np.zeros(64), (lo + hi) / 2)
                np.testing.assert_array_equal(np.flatnonzero(out), S)
        assert hits > 10


class TestStoppingTime:
    def test_unit_argument(self):
        lam0 = math.sqrt(40 * math.log(math.e * 50 / 5)) / 7.0
        assert stopping_time_oracle(lam0, 1.0, 7.0, 50, 5, 0.25) == 1

    def test_argument_sixteen(self):
        lam0 = 4 * math.sqrt(40 * math.log(math.e * 50 / 5)) / 7.0
        assert stopping_time_oracle(lam0, 1.0, 7.0, 50, 5, 0.25) == 5

    def test_small_argument_clamped(self):
        assert stopping_time_oracle(1e-6, 1.0, 1.0, 50, 5, 0.5) == 1

    def test_sigma_zero_rejected(self):
        with pytest.raises(ValueError):
            stopping_time_oracle(1.0, 0.0, 1.0, 10, 2, 0.25)

    @settings(max_examples=200)
    @given(st.floats(1e-3, 1e3), st.floats(0.1, 10), st.floats(1, 100), st.integers(1, 500), st.floats(0.05, 0.95))
    def test_formula(self, lam0, sigma, norm, p, kappa):
        s = max(1, p // 7)
        expected = stopping_time_formula(lam0, sigma, norm, p, s, kappa)
        got = stopping_time_oracle(lam0, sigma, norm, p, s, kappa)
        # the implementation nudges by 1e-9 to absorb round-off at exact integers
        assert got in (expected, expected + 1)
        if got != expected:
            arg = lam0 ** 2 * norm ** 2 / (40 * sigma ** 2 * math.log(math.e * p / s))
            x = 2 * math.log(arg) / math.log(1 / kappa)
            assert abs(x - round(x)) < 1e-8


class TestRunNonadaptive:
    def test_trace_invariants(self):
        inst = _instance(200, 400, 4, 1.2, 1.0, 3)
        tr = run_nonadaptive(inst.design, inst.y, 4, 1.0, beta_true=inst.beta_true)
        assert tr.iterates[0].beta_hat.nnz == 0
        lams = tr.lambdas
        assert np.all(np.diff(lams) <= 0)
        assert tr.stop_index < len(tr.iterates)
        assert tr.stop_index == tr.info["m_hat"]
        assert tr.stop_reason == "floor_hit"
        assert lams[-1] >= tr.info["lambda_inf"]

    def test_matches_reference_chain(self):
        inst = _instance(120, 200, 3, 1.5, 1.0, 4)
        tr = run_nonadaptive(inst.design, inst.y, 3, 1.0)
        ref = iht_chain(inst.design.values, inst.y, tr.lambdas[1:])
        for rec, b in zip(tr.iterates, ref):
            np.testing.assert_allclose(rec.beta_hat.to_dense(), b, rtol=1e-12, atol=1e-12)

    def test_identity_noiseless_exact(self):
        d = generate_design("identity_scaled", 64, 64)
        beta = sample_signal(64, 5, 0.3, "uniform", seed=1)
        y = synthesize_instance(d, beta, 0.0).y
        tr = run_nonadaptive(d, y, 5, 0.0)
        np.testing.assert_allclose(tr.beta_hat, beta.to_dense(), rtol=1e-14)

    def test_noiseless_certified_design(self, certified_design):
        d, report = certified_design
        assert report.delta_s < 1 / 36
        for seed in range(20):
            beta = sample_signal(d.p, 2, 0.5, "uniform", seed=seed)
            y = synthesize_instance(d, beta, 0.0).y
            tr = run_nonadaptive(d, y, 2, 0.0)
            err = np.linalg.norm(tr.beta_hat - beta.to_dense())
            assert err <= 1e-8 * beta.norm()

    def test_max_iter_flag(self):
        inst = _instance(100, 150, 3, 5.0, 1.0, 5)
        tr = run_nonadaptive(inst.design, inst.y, 3, 1.0, max_iter=1)
        assert tr.stop_reason == "max_iter" and "max_iter" in tr.flags
        assert tr.stop_index == 1 and len(tr.iterates) == 2

    def test_precondition_flag(self):
        inst = _instance(100, 150, 3, 5.0, 1.0, 6)
        small = run_nonadaptive(inst.design, inst.y, 3, 1.0, beta_true=inst.beta_true, lambda0=0.1)
        assert "precondition_unverified" in small.flags
        big = run_nonadaptive(inst.design, inst.y, 3, 1.0, beta_true=inst.beta_true, lambda0=100.0)
        assert "precondition_unverified" not in big.flags
        blind = run_nonadaptive(inst.design, inst.y, 3, 1.0, lambda0=100.0)
        assert "precondition_unverified" in blind.flags
        default = run_nonadaptive(inst.design, inst.y, 3, 1.0)
        assert not default.flags

    def test_residual_floor(self):
        for seed in range(30):
            d = generate_design("gaussian", 400, 1000, seed=derive_seed("rf", seed))
            a = 3 * universal_threshold(5, 1.0, d.max_col_norm, 1000)
            beta = sample_signal(1000, 5, a, seed=seed)
            inst = synthesize_instance(d, beta, 1.0, seed=seed)
            tr = run_nonadaptive(d, inst.y, 5, 1.0)
            assert 0.5 <= tr.final.residual_norm_sq / 400 <= 1.6

    def test_error_columns_need_truth(self):
        inst = _instance(50, 60, 2, 2.0, 1.0, 7)
        tr = run_nonadaptive(inst.design, inst.y, 2, 1.0)
        assert tr.final.l2_error_sq is None and tr.final.off_support_count is None
        tr2 = run_nonadaptive(inst.design, inst.y, 2, 1.0, beta_true=inst.beta_true)
        diff = tr2.beta_hat - inst.beta_true.to_dense()
        assert tr2.final.l2_error_sq == pytest.approx(float(diff @ diff), rel=1e-15)

    @pytest.mark.parametrize("kw", [dict(s=0), dict(s=61), dict(kappa=1.0)])
    def test_validation(self, kw):
        inst = _instance(50, 60, 2, 2.0, 1.0, 7)
        args = dict(s=2, sigma=1.0, kappa=0.25)
        args.update(kw)
        with pytest.raises(ValueError):
            run_nonadaptive(inst.design, inst.y, **args)


def test_trace_csv():
    inst = _instance(50, 60, 2, 2.0, 1.0, 8)
    tr = run_nonadaptive(inst.design, inst.y, 2, 1.0, beta_true=inst.beta_true)
    buf = io.StringIO()
    tr.write_csv(buf, replication=3)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(TRACE_CSV_COLUMNS)
    assert len(lines) == len(tr.iterates) + 1
    assert all(ln.startswith("3,") for ln in lines[1:])
    assert float(lines[-1].split(",")[3]) == tr.final.l2_error_sq


def test_sparse_storage_round_trip():
    inst = _instance(50, 60, 2, 2.0, 1.0, 9)
    tr = run_nonadaptive(inst.design, inst.y, 2, 1.0)
    for rec in tr.iterates:
        assert isinstance(rec.beta_hat, SparseVector)
        assert rec.nnz == np.count_nonzero(rec.beta_hat.to_dense())
