import math

import numpy as np
import pytest
from scipy import stats

from bnnsv.activations import ActivationKind, act_eval
from bnnsv.exceptions import DimensionError, NumericalSingularityError, SweepError
from bnnsv.model import Dataset, SamplerConfig, SvState, new_network_state
from bnnsv.sampler import (ChainOutput, PredictiveDraw, PredictiveDraws, SweepKernel,
                           activation_log_weights, common_activation_log_weights, draw_activation,
                           draw_theta, forecast_variances, gaussian_posterior_draw, gibbs_sweep,
                           predict, run_chain)
from oracles import conjugate_posterior, linear_horseshoe_gibbs


def toy_data(rng, T=60, K=3, noise=0.3):
    X = rng.normal(size=(T, K))
    y = X @ np.linspace(1, -1, K) + np.tanh(X[:, 0]) + noise * rng.normal(size=T)
    return Dataset(y, X)


def one_state_chain(K=3, sigma_sq=1.0, T=4):
    cfg = SamplerConfig(n_draws=2, n_burn=1)
    s = new_network_state(K, 2, cfg, 0, y=np.arange(T, dtype=float))
    s.gamma[:] = 0.0
    s.gamma[0] = 1.0
    s.sv = SvState(np.full(T, math.log(sigma_sq)), math.log(sigma_sq), 0.0, 1e-300)
    out = ChainOutput.allocate(1, K, 2, T, cfg)
    out.record(0, s, 0, 0.0)
    return out


class TestGaussianPosterior:
    def test_closed_form_example(self, rng):
        D = np.ones((2, 1))
        y = np.array([1.0, 2.0])
        mean = gaussian_posterior_draw(D, y, np.ones(2), np.ones(1), None)
        assert mean[0] == pytest.approx(1.0)
        draws = np.array([gaussian_posterior_draw(D, y, np.ones(2), np.ones(1), rng)[0]
                          for _ in range(40_000)])
        assert draws.var() == pytest.approx(1 / 3, rel=0.03)

    def test_matches_dense_oracle(self, rng):
        D = rng.normal(size=(30, 4))
        y = rng.normal(size=30)
        v = rng.uniform(0.2, 2.0, 30)
        prec = rng.uniform(0.1, 5, 4)
        m, _ = conjugate_posterior(D, y, v, prec)
        np.testing.assert_allclose(gaussian_posterior_draw(D, y, 1 / v, prec, None), m, rtol=1e-10)

    def test_infinite_prior_precision_shrinks_to_zero(self, rng):
        D = rng.normal(size=(20, 3))
        draw = gaussian_posterior_draw(D, rng.normal(size=20), np.ones(20), np.full(3, 1e150), rng)
        assert np.max(np.abs(draw)) < 1e-70

    def test_scaling_identity(self, rng):
        D = rng.normal(size=(25, 3))
        y = rng.normal(size=25)
        w = rng.uniform(0.5, 2, 25)
        prec = rng.uniform(0.5, 2, 3)
        a = gaussian_posterior_draw(D, y, w, prec, None)
        b = gaussian_posterior_draw(D, y, w / 7.0, prec / 7.0, None)
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_singular_precision(self):
        D = np.array([[np.nan, 1.0], [1.0, 1.0]])
        with pytest.raises(NumericalSingularityError) as info:
            gaussian_posterior_draw(D, np.ones(2), np.ones(2), np.zeros(2), None)
        assert hasattr(info.value, "condition_estimate")


class TestDrawTheta:
    def test_linear_mode_uses_covariates_only(self, rng):
        data = toy_data(rng)
        s = new_network_state(3, 3, None, rng, y=data.y)
        g, b = draw_theta(s, data, rng, linear_only=True)
        assert g.shape == (3,)
        np.testing.assert_array_equal(b, s.beta)

    def test_mean_matches_oracle(self, rng):
        data = toy_data(rng)
        s = new_network_state(3, 2, None, rng, y=data.y)
        D = np.hstack([data.X, s.hidden(data.X)])
        prec = np.concatenate([1 / s.hs_gamma.prior_variance(), s.mgp.precisions])
        m, _ = conjugate_posterior(D, data.y, s.sv.variances, prec)
        g, b = draw_theta(s, data, None)
        np.testing.assert_allclose(np.concatenate([g, b]), m, rtol=1e-9)


class TestActivationWeights:
    def test_zero_loading_is_uniform(self, rng):
        lw = activation_log_weights(rng.normal(size=30), 0.0, rng.normal(size=30), np.ones(30))
        np.testing.assert_allclose(np.exp(lw), 0.25)
        data = toy_data(rng)
        s = new_network_state(3, 2, None, rng, y=data.y)
        s.beta[0] = 0.0
        draws = np.array([draw_activation(0, data.y, s, data, rng) for _ in range(100_000)])
        np.testing.assert_allclose(np.bincount(draws, minlength=5)[1:] / 1e5, 0.25, atol=0.02 * 0.25)

    def test_recovers_sigmoid_residual(self, rng):
        z = np.linspace(-6, 6, 80)
        resid = 1.5 * act_eval(ActivationKind.SIGMOID, z)
        lw = activation_log_weights(resid, 1.5, z, np.full(80, 10.0))
        assert np.exp(lw[ActivationKind.SIGMOID - 1]) > 0.99

    def test_coinciding_kinds_tie(self, rng):
        z = rng.uniform(0.1, 3, 50)
        lw = activation_log_weights(rng.normal(size=50), 0.8, z, np.ones(50))
        assert abs(lw[ActivationKind.RELU - 1] - lw[ActivationKind.LEAKY_RELU - 1]) <= 1e-12

    def test_probabilities_normalised(self, rng):
        lw = activation_log_weights(rng.normal(size=20) * 100, 50.0, rng.normal(size=20) * 10,
                                    np.ones(20))
        assert np.exp(lw).sum() == pytest.approx(1.0)

    def test_common_mode_sums_neuron_terms(self, rng):
        data = toy_data(rng)
        s = new_network_state(3, 3, None, rng, y=data.y)
        s.beta = rng.normal(size=3)
        w = 1 / s.sv.variances
        lw = common_activation_log_weights(data.y, s, data.X, w)
        Z = s.neuron_inputs(data.X)
        direct = []
        for k in ActivationKind:
            r = data.y - act_eval(k, Z) @ s.beta
            direct.append(-0.5 * np.sum(w * r * r))
        direct = np.array(direct) - np.logaddexp.reduce(direct)
        np.testing.assert_allclose(lw, direct, atol=1e-10)


class TestSweep:
    def test_reproducible(self, rng):
        data = toy_data(rng)
        cfg = SamplerConfig(n_draws=4, n_burn=1)
        runs = []
        for _ in range(2):
            r = np.random.default_rng(42)
            s = new_network_state(3, 3, cfg, r, y=data.y)
            k = SweepKernel(3, cfg)
            for _ in range(3):
                s = gibbs_sweep(s, data, cfg, r, k)
            runs.append(s)
        for name in ("gamma", "beta", "kappa", "zeta", "delta"):
            np.testing.assert_array_equal(getattr(runs[0], name), getattr(runs[1], name))
        np.testing.assert_array_equal(runs[0].sv.log_vol, runs[1].sv.log_vol)

    def test_infinite_threshold_draws_from_prior(self, rng):
        T, K = 80, 4
        data = Dataset(rng.normal(0, 0.3, T), rng.normal(size=(T, K)))
        cfg = SamplerConfig(n_draws=600, n_burn=200, mgp_threshold=math.inf, sv_rho_fixed=0.0)
        chain = run_chain(data, cfg, rng)
        assert np.all(np.isnan(chain.accept_stat))
        assert np.all(np.abs(np.median(chain.beta, axis=0)) < 0.1)

    def test_common_mode_keeps_one_kind(self, rng):
        data = toy_data(rng)
        chain = run_chain(data, SamplerConfig(n_draws=40, n_burn=10, common_activation=True), rng)
        assert np.all(chain.delta == chain.delta[:, :1])

    def test_errors_carry_sweep_index(self, rng, monkeypatch):
        import bnnsv.sampler as sampler

        calls = {"n": 0}
        real = sampler.sv_update

        def failing(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] == 3:
                raise NumericalSingularityError("boom", 1e20)
            return real(*args, **kwargs)

        monkeypatch.setattr(sampler, "sv_update", failing)
        with pytest.raises(SweepError) as info:
            run_chain(toy_data(rng), SamplerConfig(n_draws=5, n_burn=1, Q=2), rng)
        assert info.value.sweep == 2
        assert isinstance(info.value.cause, NumericalSingularityError)


class TestLinearMode:
    def test_matches_independent_linear_sampler(self):
        rng = np.random.default_rng(8)
        T, K = 60, 3
        X = rng.normal(size=(T, K))
        y = X @ np.array([0.8, 0.0, -0.4]) + 0.5 * rng.normal(size=T)
        data = Dataset(y, X)
        cfg = SamplerConfig(n_draws=25_500, n_burn=500, linear_only=True, sv_enabled=False,
                            thin=5)
        ours = run_chain(data, cfg, rng).gamma
        ref = linear_horseshoe_gibbs(y, X, 25_500, np.random.default_rng(9))[500::5]
        assert ours.shape[0] == ref.shape[0] == 5000
        for j in range(K):
            assert stats.ks_2samp(ours[:, j], ref[:, j]).pvalue > 0.01


@pytest.fixture(scope="module")
def chain():
    rng = np.random.default_rng(3)
    data = toy_data(rng)
    return data, run_chain(data, SamplerConfig(n_draws=120, n_burn=40, Q=4, sv_rho_fixed=0.0,
                                               store_full_state=True), rng)


class TestRunChain:

    def test_retained_count(self, chain):
        assert chain[1].n_draws == 80

    def test_retained_states_validate(self, chain):
        for s in range(chain[1].n_draws):
            chain[1].state(s).validate()

    def test_full_state_round_trip(self, chain):
        c = chain[1]
        s = c.state(5)
        np.testing.assert_array_equal(s.hs_kappa.aux_local, c.aux["hs_kappa_aux_local"][5])

    def test_step_sizes_recorded(self, chain):
        assert np.all(np.isfinite(chain[1].step_sizes) | np.isnan(chain[1].step_sizes))
        assert chain[1].wall_time > 0

    def test_conditional_means_match_states(self, chain):
        data, c = chain
        m = c.conditional_means(data.X[:3])
        s = c.state(7)
        np.testing.assert_allclose(m[7], data.X[:3] @ s.gamma + s.hidden(data.X[:3]) @ s.beta)

    def test_single_row_cannot_be_fitted(self):
        with pytest.raises(DimensionError):
            run_chain(Dataset([1.0], [[1.0]]), SamplerConfig(n_draws=2, n_burn=1))

    def test_thinned_count(self):
        rng = np.random.default_rng(0)
        c = run_chain(toy_data(rng), SamplerConfig(n_draws=31, n_burn=10, thin=4, Q=2), rng)
        assert c.n_draws == 6

    def test_warm_start_resizes_volatility(self, chain):
        data, c = chain
        rng = np.random.default_rng(1)
        out = run_chain(data.subset(np.arange(50)), SamplerConfig(n_draws=6, n_burn=2, Q=4),
                        rng, init_state=c.final_state)
        assert out.T == 50


class TestPredict:
    def test_degenerate_chain(self, rng):
        chain = one_state_chain()
        d = predict(chain, np.array([2.0, 0.0, 0.0]), 1, rng)
        assert d[0].mean == pytest.approx(2.0)
        assert d[0].variance == pytest.approx(1.0)
        assert isinstance(d[0], PredictiveDraw) and len(d) == 1

    def test_horizon_irrelevant_without_persistence(self):
        chain = one_state_chain()
        chain.sv_state_var[:] = 0.3
        many = lambda h, seed: np.concatenate(
            [forecast_variances(chain, h, np.random.default_rng(seed + i)) for i in range(4000)])
        assert stats.ks_2samp(many(1, 0), many(3, 10_000)).pvalue > 0.01

    def test_draw_mean_matches_mean_of_means(self, rng):
        data = toy_data(rng)
        c = run_chain(data, SamplerConfig(n_draws=400, n_burn=100, Q=3), rng)
        d = predict(c, data.X[0], 1, rng)
        se = d.draws.std() / math.sqrt(len(d))
        assert abs(d.draws.mean() - d.means.mean()) < 3 * se

    def test_bad_horizon(self, rng):
        with pytest.raises(ValueError):
            predict(one_state_chain(), np.zeros(3), 0, rng)

    def test_positive_variance_enforced(self):
        with pytest.raises(ValueError):
            PredictiveDraw(0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            PredictiveDraws([0.0], [-1.0], [0.0])
