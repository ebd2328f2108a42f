import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kstest

from countsel.data import Dataset, ModelConfig
from countsel.diagnostics import compute_pit, weight_summary
from countsel.io import load_csv, write_dataset
from countsel.oracle import enumerate_posterior
from countsel.pg import pg_draw
from countsel.runner import fit
from countsel.sampler import SamplerConfig, WeightedSample
from countsel.simulate import simulate_binomial, simulate_correlated, simulate_negbin

from _oracles import dense_enumeration


class TestLoadCsv:
    def test_default_counts_are_ones(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("y,x1,x2\n1,0.5,-1.0\n0,1.5,2.0\n1,0.0,0.25\n")
        ds = load_csv(f, "y")
        assert ds.N == 3 and ds.P == 2
        np.testing.assert_array_equal(ds.C, [1, 1, 1])
        assert ds.names == ["x1", "x2"]

    def test_count_column_parsed(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("y,c,x1\n3,5,0.1\n2,4,0.2\n")
        ds = load_csv(f, "y", "c")
        np.testing.assert_array_equal(ds.C, [5, 4])

    def test_response_over_count_names_row(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("y,c,x1\n1,2,0.0\n5,3,0.0\n")
        with pytest.raises(ValueError, match="row 1"):
            load_csv(f, "y", "c")

    def test_bad_cells_name_coordinates(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("y,x1\n1,0.5\nbad,1.0\n")
        with pytest.raises(ValueError, match="row 1"):
            load_csv(f, "y")
        f.write_text("y,x1\n1,0.5\n0,oops\n")
        with pytest.raises(ValueError, match="column 'x1'"):
            load_csv(f, "y")

    def test_missing_columns(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("y,x1\n1,0.5\n")
        with pytest.raises(ValueError, match="response column"):
            load_csv(f, "z")
        with pytest.raises(ValueError, match="count column"):
            load_csv(f, "y", "c")

    @settings(max_examples=25, deadline=None)
    @given(
        n=st.integers(1, 12),
        p=st.integers(1, 5),
        with_counts=st.booleans(),
        seed=st.integers(0, 2**31 - 1),
    )
    def test_round_trip(self, tmp_path_factory, n, p, with_counts, seed):
        rng = np.random.default_rng(seed)
        c = rng.integers(2, 9, n) if with_counts else np.ones(n, dtype=int)
        ds = Dataset(
            X=rng.normal(size=(n, p)) * 10.0 ** rng.integers(-3, 4),
            Y=rng.integers(0, c + 1),
            C=c,
        )
        path = tmp_path_factory.mktemp("rt") / "d.csv"
        write_dataset(ds, path)
        back = load_csv(path, "y", "c" if with_counts else None)
        np.testing.assert_array_equal(back.X, ds.X)
        np.testing.assert_array_equal(back.Y, ds.Y)
        np.testing.assert_array_equal(back.C, ds.C)
        assert back.names == ds.names


class TestSimulators:
    def test_correlated_pair_is_nearly_identical(self):
        ds, truth = simulate_correlated(512, 8, seed=3)
        corr = np.corrcoef(ds.X[:, 0], ds.X[:, 1])[0, 1]
        assert corr >= 0.999
        np.testing.assert_array_equal(ds.C, 10)

    def test_correlated_response_rate_balanced(self):
        ds, _ = simulate_correlated(4000, 4, seed=4)
        assert abs((ds.Y / ds.C).mean() - 0.5) < 0.05

    def test_requires_three_covariates(self):
        with pytest.raises(ValueError):
            simulate_correlated(10, 2, seed=0)

    def test_binomial_generator_shapes(self):
        ds = simulate_binomial(20, 5, [1, 3], [1.0, -1.0], C=7, seed=5)
        assert ds.N == 20 and ds.P == 5
        assert np.all(ds.Y <= ds.C)


class TestEnumeration:
    def test_flat_zero_column_pip_is_prior(self):
        ds = Dataset(X=np.zeros((6, 1)), Y=[1, 0, 1, 0, 1, 0], C=np.ones(6, int))
        cfg = ModelConfig(h=0.3)
        omega = np.full(6, 0.4)
        pips, probs = enumerate_posterior(ds, omega, cfg)
        assert pips[0] == pytest.approx(0.3, abs=1e-10)
        assert probs.sum() == pytest.approx(1.0)

    def test_duplicate_columns_equal_pips(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(10, 3))
        x[:, 2] = x[:, 0]
        ds = Dataset(X=x, Y=rng.binomial(4, 0.5, 10), C=np.full(10, 4))
        omega = rng.gamma(2, 0.5, 10) + 0.1
        pips, _ = enumerate_posterior(ds, omega, ModelConfig(h=0.2))
        assert pips[0] == pytest.approx(pips[2], rel=1e-9)

    def test_matches_independent_dense_path(self):
        rng = np.random.default_rng(7)
        ds = simulate_binomial(12, 5, [0, 2], [1.0, -1.5], C=6, seed=8)
        omega = rng.gamma(2, 0.5, 12) + 0.1
        cfg = ModelConfig(h=0.25).resolve(ds)
        pips, probs = enumerate_posterior(ds, omega, cfg)
        want_pips, want_probs = dense_enumeration(
            ds.X, ds.Y, ds.C, omega, cfg.tau, cfg.tau_bias, cfg.h
        )
        np.testing.assert_allclose(pips, want_pips, atol=1e-9)
        np.testing.assert_allclose(probs, want_probs, atol=1e-9)

    def test_negbin_enumeration_matches_dense(self):
        rng = np.random.default_rng(8)
        ds = simulate_negbin(10, 4, [1], [0.8], nu=1.2, psi0=0.5, seed=9)
        omega = rng.gamma(2, 0.5, 10) + 0.1
        cfg = ModelConfig(likelihood="negbin", psi0=0.5, h=0.2).resolve(ds)
        pips, probs = enumerate_posterior(ds, omega, cfg, nu=1.2)
        want_pips, want_probs = dense_enumeration(
            ds.X, ds.Y, ds.C, omega, cfg.tau, cfg.tau_bias, cfg.h,
            likelihood="negbin", nu=1.2, psi0=0.5,
        )
        np.testing.assert_allclose(pips, want_pips, atol=1e-9)

    def test_p_limit(self):
        ds = Dataset(X=np.zeros((2, 16)), Y=[0, 1], C=[1, 1])
        with pytest.raises(ValueError):
            enumerate_posterior(ds, np.ones(2), ModelConfig())


def _point_mass_samples(n_samples, gamma, log_nu=None):
    q = np.zeros(1)
    return [WeightedSample(1.0, q, gamma, log_nu, 1) for _ in range(n_samples)]


class TestPit:
    def test_true_model_predictive_is_calibrated(self):
        # Predictive equals the generative law: PIT must be uniform.
        nu, psi0 = 1.5, 1.0
        test = simulate_negbin(899, 3, [], [], nu=nu, psi0=psi0, seed=10)
        cfg = ModelConfig(likelihood="negbin", psi0=psi0, h=0.2).resolve(test)
        samples = _point_mass_samples(50, (), log_nu=math.log(nu))
        betas = [np.zeros(1)] * 50
        rng = np.random.default_rng(11)
        pit = compute_pit(samples, betas, test, rng, cfg)
        stat, pval = kstest(pit, "uniform")
        assert stat < 1.36 / math.sqrt(pit.size), f"KS={stat:.4f} p={pval:.3f}"

    def test_binomial_calibration(self):
        test = simulate_binomial(899, 3, [0], [1.0], C=10, seed=12)
        cfg = ModelConfig().resolve(test)
        samples = _point_mass_samples(40, (0,))
        betas = [np.array([0.0, 1.0])] * 40
        rng = np.random.default_rng(13)
        pit = compute_pit(samples, betas, test, rng, cfg)
        stat, _ = kstest(pit, "uniform")
        assert stat < 1.36 / math.sqrt(pit.size)

    def test_point_mass_predictive_is_uniform_by_randomization(self):
        # Degenerate predictive concentrated on the observed value: the
        # discrete correction alone produces uniform values.
        y = np.zeros(500, dtype=int)
        test = Dataset(X=np.zeros((500, 1)), Y=y, C=np.ones(500, int))
        cfg = ModelConfig().resolve(test)
        samples = _point_mass_samples(10, ())
        betas = [np.array([-40.0])] * 10  # success prob ~ 0: Y=0 w.p. ~1
        rng = np.random.default_rng(14)
        pit = compute_pit(samples, betas, test, rng, cfg)
        stat, _ = kstest(pit, "uniform")
        assert stat < 1.36 / math.sqrt(pit.size)

    def test_empty_inputs_rejected(self):
        test = Dataset(X=np.zeros((1, 1)), Y=[0], C=[1])
        cfg = ModelConfig().resolve(test)
        with pytest.raises(ValueError):
            compute_pit([], [], test, np.random.default_rng(0), cfg)


class TestWeightSummary:
    def test_summary_fields(self):
        rho = np.array([0.25, 0.25, 0.5, 0.125])
        out = weight_summary(rho, bound=0.5)
        assert out["count"] == 4
        assert out["bound_satisfied"] is True
        assert out["max"] == 0.5
        assert 1.0 <= out["effective_sample_size"] <= 4.0


class TestFit:
    def test_summary_structure_and_pooling(self):
        ds = simulate_binomial(40, 6, [0, 3], [1.5, -1.0], C=8, seed=15)
        summary, results = fit(
            ds, ModelConfig(), SamplerConfig(T=3000, T_burn=800, seed=1), chains=2
        )
        assert len(summary.pips) == 6
        assert all(0.0 <= v <= 1.0 for v in summary.pips)
        assert summary.chains == 2 and len(summary.per_chain) == 2
        assert summary.nu_posterior_mean is None
        assert 0.0 < summary.i0_fraction < 1.0
        # pooled estimate equals weight-weighted average of chain estimates
        num = sum(r.rb_num for r in results)
        den = sum(r.rho_sum for r in results)
        np.testing.assert_allclose(summary.pips, num / den, rtol=1e-12)

    def test_beta_summaries_conditional_on_inclusion(self):
        ds = simulate_binomial(120, 4, [1], [2.0], C=10, seed=16)
        summary, _ = fit(
            ds, ModelConfig(), SamplerConfig(T=4000, T_burn=1000, seed=2), chains=1
        )
        assert summary.pips[1] > 0.9
        assert summary.beta_cond_mean[1] == pytest.approx(2.0, abs=0.7)
        never = [j for j in range(4) if summary.pips[j] < 1e-6]
        for j in never:
            assert math.isnan(summary.beta_cond_mean[j])

    def test_i0_fraction_tracks_target(self):
        ds, _ = simulate_correlated(48, 16, seed=17)
        summary, _ = fit(
            ds,
            ModelConfig(),
            SamplerConfig(T=9000, T_burn=3000, seed=3, f_omega=0.25),
            chains=1,
            record_betas=False,
        )
        assert 0.20 <= summary.i0_fraction <= 0.30
