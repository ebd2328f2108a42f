import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from countsel.data import Dataset, ModelConfig
from countsel.glm import CholeskyCache, InclusionState, conditional_pips
from countsel.oracle import enumerate_posterior
from countsel.pg import pg_draw
from countsel.sampler import (
    ChainState,
    SamplerConfig,
    adapt_xi,
    eta,
    flip,
    mg_accept,
    omega_update,
    phi,
    rao_blackwell_pips,
    run_chain,
    run_chains,
    sample_i,
    _omega_log_alpha,
)
from countsel.simulate import simulate_binomial, simulate_correlated

from _oracles import dense_omega_log_alpha


def make_state(cond_pips, active=(), xi=1.0, variant_dataset=None):
    p = len(cond_pips)
    gamma = InclusionState(tuple(active), p)
    return ChainState(
        gamma=gamma,
        omega=np.ones(1),
        log_nu=None,
        xi=xi,
        iteration=0,
        cache=None,
        cond_pips=np.asarray(cond_pips, dtype=np.float64),
    )


class TestEta:
    def test_tgs_is_one(self):
        assert eta(0.9, 100, "tgs") == 1.0
        assert eta(0.0, 3, "TGS") == 1.0

    def test_weighted_values(self):
        assert eta(0.0, 100, "wtgs", epsilon=5.0) == pytest.approx(0.05)
        assert eta(0.5, 10, "wtgs", epsilon=5.0) == pytest.approx(1.0)
        assert eta(0.25, 10, "wgs", epsilon=5.0) == pytest.approx(0.75)


class TestPhi:
    def test_single_term(self):
        state = make_state([0.5], xi=1.0)
        assert phi(state, SamplerConfig(variant="tgs", T=2, T_burn=0)) == pytest.approx(2.0)

    def test_saturated_conditionals_hit_weight_bound(self):
        # all current-state conditionals -> 1 gives phi -> xi + 1/2
        state = make_state([1.0 - 1e-16] * 6, active=range(6), xi=2.0)
        val = phi(state, SamplerConfig(variant="tgs", T=2, T_burn=0))
        assert val == pytest.approx(2.5, abs=1e-12)
        assert 1.0 / val <= 1.0 / 2.5 + 1e-15

    def test_two_term_example(self):
        state = make_state([0.5, 0.75], active=(1,), xi=1.0)
        # current-state probs: (1 - 0.5, 0.75) = (0.5, 0.75)? second active with p1=0.75
        # pick probs (0.5, 0.25): gamma_2 active with cond pip 0.25
        state = make_state([0.5, 0.25], active=(1,), xi=1.0)
        val = phi(state, SamplerConfig(variant="tgs", T=2, T_burn=0))
        assert val == pytest.approx(1.0 + 0.5 * (1.0 + 2.0), abs=1e-12)


class TestSampleI:
    def test_probabilities_match_masses(self):
        state = make_state([0.5, 0.25], active=(1,), xi=1.0)
        cfg = SamplerConfig(variant="tgs", T=2, T_burn=0)
        rng = np.random.default_rng(0)
        draws = np.array([sample_i(state, cfg, rng) for _ in range(100_000)])
        freqs = np.bincount(draws, minlength=3) / draws.size
        # exact masses: (0.4, 0.2, 0.4), binomial SE ~ 0.0016
        for k, want in enumerate([0.4, 0.2, 0.4]):
            se = math.sqrt(want * (1 - want) / draws.size)
            assert abs(freqs[k] - want) <= 3.5 * se

    def test_zero_xi_never_draws_arm_zero(self):
        state = make_state([0.3, 0.6, 0.9], xi=0.0)
        cfg = SamplerConfig(variant="wtgs", T=2, T_burn=0, xi=0.0)
        rng = np.random.default_rng(1)
        draws = [sample_i(state, cfg, rng) for _ in range(2000)]
        assert min(draws) >= 1

    def test_arm_probabilities_sum_to_one(self):
        from countsel.sampler import _phi_terms

        rng = np.random.default_rng(8)
        for variant in ("tgs", "wtgs", "wgs"):
            p = 17
            cond = np.clip(rng.random(p), 1e-6, 1 - 1e-6)
            mask = rng.random(p) < 0.3
            terms = _phi_terms(cond, mask, variant, 5.0 / p)
            xi = 1.3
            phi_val = xi + terms.sum() / p
            probs = np.concatenate([[xi], terms / p]) / phi_val
            assert abs(probs.sum() - 1.0) <= 1e-12

    def test_equal_conditionals_visit_uniformly(self):
        state = make_state([0.5] * 5, xi=1.0)
        cfg = SamplerConfig(variant="tgs", T=2, T_burn=0)
        rng = np.random.default_rng(2)
        draws = np.array([sample_i(state, cfg, rng) for _ in range(50_000)])
        arm = draws[draws > 0]
        freqs = np.bincount(arm, minlength=6)[1:] / arm.size
        se = math.sqrt(0.2 * 0.8 / arm.size)
        assert np.all(np.abs(freqs - 0.2) <= 4 * se)


class TestFlip:
    def test_examples(self):
        g = InclusionState((1,), 3)
        g2 = flip(g, 1)
        assert set(g2.active) == {0, 1}
        assert flip(g2, 1).active == g.active
        with pytest.raises(ValueError):
            flip(g, 0)
        with pytest.raises(ValueError):
            flip(g, 4)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 12))
    def test_involution_and_size_change(self, p, i):
        i = min(i, p)
        g = InclusionState(tuple(j for j in range(0, p, 2)), p)
        g2 = flip(g, i)
        assert abs(g2.size - g.size) == 1
        g3 = flip(g2, i)
        assert sorted(g3.active) == sorted(g.active)


class TestMgAccept:
    def test_half_is_always_one(self):
        assert mg_accept(0.5, 0) == 1.0
        assert mg_accept(0.5, 1) == 1.0

    def test_asymmetric(self):
        assert mg_accept(0.75, 1) == pytest.approx(1.0 / 3.0)
        assert mg_accept(0.75, 0) == 1.0

    @settings(max_examples=50)
    @given(st.floats(0.01, 0.99))
    def test_bounds(self, q):
        for x in (0, 1):
            a = mg_accept(q, x)
            assert 0.0 < a <= 1.0


class TestAdaptXi:
    def test_first_step(self):
        assert adapt_xi(5.0, 10.0, 0, 0.25) == pytest.approx(4.75)

    def test_fixed_point(self):
        # xi/phi == f_omega leaves xi unchanged
        assert adapt_xi(2.0, 8.0, 3, 0.25) == pytest.approx(2.0)

    def test_floor(self):
        assert adapt_xi(1e-3, 1e6, 0, 1e-9) == pytest.approx(1e-3)


def small_binomial(seed=0, n=24, p=5):
    return simulate_binomial(n, p, [0, 2], [1.5, -1.0], C=6, seed=seed)


class TestOmegaUpdate:
    def _chain_state(self, ds, cfg, active, seed=3):
        rng = np.random.default_rng(seed)
        omega = pg_draw(ds.C.astype(float), 0.0, rng)
        state = InclusionState(tuple(active), ds.P)
        cache = CholeskyCache(state, omega, ds, cfg)
        cond = conditional_pips(state, cache, omega, ds, cfg)
        return ChainState(state, omega, None, 1.0, 0, cache, cond), rng

    def test_degenerate_proposal_alpha_one(self):
        ds = small_binomial()
        cfg = ModelConfig().resolve(ds)
        st_, _ = self._chain_state(ds, cfg, (0,))
        la = _omega_log_alpha(st_.cache, ds, st_.cache.omega)
        assert math.exp(min(la, 0.0)) == pytest.approx(1.0, abs=1e-9)

    def test_alpha_matches_dense_oracle(self):
        ds = simulate_binomial(6, 3, [1], [2.0], C=4, seed=9)
        cfg = ModelConfig().resolve(ds)
        st_, rng = self._chain_state(ds, cfg, (1,), seed=11)
        for _ in range(10):
            omega_prop = pg_draw(ds.C.astype(float), st_.cache.psi_hat(), rng)
            got = _omega_log_alpha(st_.cache, ds, omega_prop)
            want = dense_omega_log_alpha(
                ds.X, ds.Y, ds.C, st_.cache.omega, omega_prop, [1],
                cfg.tau, cfg.tau_bias,
            )
            assert got == pytest.approx(want, abs=1e-8)

    def test_public_update_runs_and_skips(self):
        ds = small_binomial()
        cfg = ModelConfig().resolve(ds)
        st_, rng = self._chain_state(ds, cfg, (0, 2))
        omega_prop, accepted, alpha = omega_update(st_, cfg, ds, rng, skip_mh=True)
        assert accepted and alpha == 1.0
        omega_prop, accepted, alpha = omega_update(st_, cfg, ds, rng)
        assert 0.0 < alpha <= 1.0
        assert omega_prop.shape == st_.omega.shape

    def test_acceptance_rate_reasonable(self):
        ds = simulate_binomial(64, 6, [0, 3], [1.0, -1.0], C=10, seed=21)
        cfg = ModelConfig().resolve(ds)
        res = run_chain(ds, cfg, SamplerConfig(T=4000, T_burn=1000, seed=5))
        assert 0.3 <= res.omega_accept_rate <= 0.995


class TestRunChain:
    def test_single_retained_sample_has_unit_weight(self):
        ds = small_binomial()
        cfg = ModelConfig()
        res = run_chain(ds, cfg, SamplerConfig(T=6, T_burn=5, seed=0))
        assert res.rho.size == 1
        assert res.rho[0] / res.rho_sum == pytest.approx(1.0)

    def test_bitwise_reproducibility(self):
        ds = small_binomial()
        cfg = ModelConfig()
        sc = SamplerConfig(T=800, T_burn=200, seed=77)
        a = run_chain(ds, cfg, sc, keep_cond_pips=True)
        b = run_chain(ds, cfg, sc, keep_cond_pips=True)
        assert np.array_equal(a.rho, b.rho)
        assert np.array_equal(a.cond_pips, b.cond_pips)
        assert np.array_equal(a.i_drawn, b.i_drawn)
        assert a.xi_final == b.xi_final

    def test_weight_bounds_exact(self):
        ds = small_binomial(seed=1)
        cfg = ModelConfig()
        for variant in ("tgs", "wtgs"):
            sc = SamplerConfig(variant=variant, T=3000, T_burn=500, seed=3)
            res = run_chain(ds, cfg, sc)
            if variant == "tgs":
                bound = 1.0 / (res.xi_final + 0.5)
            else:
                bound = 1.0 / (res.xi_final + sc.epsilon / (2 * ds.P))
            assert np.all(res.rho <= bound)

    def test_wgs_variant_runs(self):
        ds = small_binomial(seed=2)
        res = run_chain(ds, ModelConfig(), SamplerConfig(variant="wgs", T=2000, T_burn=400, seed=1))
        assert np.all((res.pips >= 0) & (res.pips <= 1))
        assert np.all(res.rho > 0)

    def test_rb_estimator_matches_weighted_samples(self):
        ds = small_binomial(seed=3)
        res = run_chain(
            ds, ModelConfig(), SamplerConfig(T=500, T_burn=100, seed=4), keep_cond_pips=True
        )
        via_samples = rao_blackwell_pips(res.weighted_samples())
        np.testing.assert_allclose(res.pips, via_samples, rtol=1e-12)

    def test_rao_blackwell_trivial_cases(self):
        from countsel.sampler import WeightedSample

        q = np.array([0.2, 0.7])
        s = WeightedSample(0.5, q, (1,), None, 2)
        np.testing.assert_allclose(rao_blackwell_pips([s]), q)
        np.testing.assert_allclose(rao_blackwell_pips([s, s, s]), q)
        with pytest.raises(ValueError):
            rao_blackwell_pips([])

    def test_fixed_xi_disables_adaptation(self):
        ds = small_binomial(seed=4)
        res = run_chain(ds, ModelConfig(), SamplerConfig(T=600, T_burn=200, xi=2.0, seed=5))
        assert res.xi_final == 2.0
        assert not res.adapted

    def test_xi_adaptation_targets_arm_zero_fraction(self):
        ds = simulate_binomial(48, 8, [1, 5], [1.2, -0.8], C=8, seed=31)
        sc = SamplerConfig(T=9000, T_burn=3000, seed=6, f_omega=0.25)
        res = run_chain(ds, ModelConfig(), sc)
        assert 0.17 <= res.i0_fraction <= 0.33

    def test_per_chain_seeds(self):
        ds = small_binomial(seed=5)
        rs = run_chains(ds, ModelConfig(), SamplerConfig(T=300, T_burn=100, seed=10), chains=3)
        assert [r.seed for r in rs] == [10, 10017, 20024]


class TestFrozenOmegaExactness:
    def _run(self, variant, n=30, p=6, T=60_000, burn=2000, seed=123):
        ds = simulate_binomial(n, p, [0, min(3, p - 1)], [1.6, -1.2], C=4, seed=7)
        cfg = ModelConfig(h=0.25)
        sc = SamplerConfig(variant=variant, T=T, T_burn=burn, xi=0.0, seed=seed)
        res = run_chain(ds, cfg, sc, keep_cond_pips=True)
        exact_pips, exact_probs = enumerate_posterior(ds, res.omega_final, cfg)
        return res, exact_pips, exact_probs

    @pytest.mark.parametrize("variant", ["tgs", "wtgs"])
    def test_frozen_omega_matches_enumeration(self, variant):
        res, exact_pips, _ = self._run(variant)
        got = res.pips
        # batch-means standard errors on the weighted estimator
        nb = 40
        batches = np.array_split(np.arange(res.rho.size), nb)
        ests = np.array([
            (res.rho[b][:, None] * res.cond_pips[b]).sum(0) / res.rho[b].sum()
            for b in batches
        ])
        se = ests.std(axis=0, ddof=1) / math.sqrt(nb)
        assert np.all(np.abs(got - exact_pips) <= 4 * se + 1e-4), (
            f"max err {np.max(np.abs(got - exact_pips)):.2e}"
        )

    def test_frozen_omega_state_frequencies(self):
        # reweighted visit frequencies of inclusion vectors match enumeration
        res, _, exact_probs = self._run("tgs", p=3, T=40_000, burn=1000)
        masks = np.array([sum(1 << j for j in g) for g in res.gammas])
        # batch-means standard errors for the autocorrelated weighted chain
        nb = 30
        batches = np.array_split(np.arange(masks.size), nb)
        ests = np.array([
            np.bincount(masks[b], weights=res.rho[b], minlength=8) / res.rho[b].sum()
            for b in batches
        ])
        got = (res.rho[:, None] * (masks[:, None] == np.arange(8))).sum(0) / res.rho_sum
        se = ests.std(axis=0, ddof=1) / math.sqrt(nb)
        assert np.all(np.abs(got - exact_probs) <= 3 * se + 1e-4)

    def test_tgs_arm_visits_uniform_at_stationarity(self):
        res, _, _ = self._run("tgs", p=6, T=50_000, burn=1000)
        arm = res.i_drawn[res.i_drawn > 0]
        freqs = np.bincount(arm, minlength=7)[1:] / arm.size
        se = math.sqrt((1 / 6) * (5 / 6) / arm.size)
        assert np.all(np.abs(freqs - 1 / 6) <= 5 * se)


class TestSamplerConfigValidation:
    def test_bad_values(self):
        with pytest.raises(ValueError):
            SamplerConfig(variant="nope", T=2, T_burn=0)
        with pytest.raises(ValueError):
            SamplerConfig(T=5, T_burn=5)
        with pytest.raises(ValueError):
            SamplerConfig(T=5, T_burn=0, epsilon=0.0)
        with pytest.raises(ValueError):
            SamplerConfig(T=5, T_burn=0, f_omega=1.0)
        with pytest.raises(ValueError):
            SamplerConfig(T=5, T_burn=0, xi=-1.0)

    def test_variant_canonicalized(self):
        assert SamplerConfig(variant="wTGS", T=2, T_burn=0).variant == "wtgs"
