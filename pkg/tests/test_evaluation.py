import csv
import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats

from bnnsv.evaluation import (GR_CRITICAL_05, GR_WINDOW_SHARES, ForecastRecord, bartlett_lrv,
                              dm_test, fluctuation_test, gr_critical_value, inefficiency_factor,
                              insample_r2, lpl, newey_west_lags, pinball, pip, quantile_score,
                              raftery_lewis, relative_r2, relative_rmse, rmse, summary_metrics,
                              tidy_rows, write_tidy_csv)
from bnnsv.exceptions import DegenerateTestError, InsufficientDrawsError
from bnnsv.model import Dataset
from bnnsv.sampler import PredictiveDraws
from oracles import ar1_inefficiency, brownian_fluctuation_quantile, simulate_ar1


def record(y, means, variances=1.0, draws=None):
    means = np.atleast_1d(np.asarray(means, dtype=float))
    variances = np.broadcast_to(np.asarray(variances, dtype=float), means.shape)
    draws = means if draws is None else draws
    return ForecastRecord(PredictiveDraws(means, variances, draws), float(y))


class TestPointAccuracy:
    def test_perfect_forecasts(self):
        assert rmse([record(1.0, 1.0), record(-2.0, -2.0)]) == 0.0

    def test_unit_errors(self):
        assert rmse([record(1.0, 0.0), record(-1.0, 0.0)]) == pytest.approx(1.0)

    def test_point_is_mean_of_means(self):
        assert rmse([record(2.0, [1.0, 3.0, 5.0])]) == pytest.approx(1.0)

    def test_identical_models_relative_one(self, rng):
        recs = [record(y, rng.normal(size=50)) for y in rng.normal(size=30)]
        assert relative_rmse(recs, recs) == 1.0

    def test_empty_records(self):
        with pytest.raises(ValueError):
            rmse([])


class TestQuantileScore:
    def test_pinball_examples(self):
        assert pinball(1.0, 0.0, 0.25) == pytest.approx(0.25)
        assert pinball(-1.0, 0.0, 0.75) == pytest.approx(0.25)
        assert pinball(3.0, 3.0, 0.4) == 0.0

    def test_median_is_half_absolute_error(self, rng):
        y, q = rng.normal(size=100), rng.normal(size=100)
        np.testing.assert_allclose(pinball(y, q, 0.5), 0.5 * np.abs(y - q))

    def test_realized_at_quantile(self):
        draws = np.linspace(-1, 1, 101)
        r = record(0.0, np.zeros(101), 1.0, draws)
        assert quantile_score([r], 0.5) == pytest.approx(0.0, abs=1e-12)

    def test_uses_empirical_quantile_of_draws(self):
        draws = np.arange(1.0, 101.0)
        r = record(0.0, np.zeros(100), 1.0, draws)
        q = np.quantile(draws, 0.25)
        assert quantile_score([r], 0.25) == pytest.approx(0.75 * q)

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.1])
    def test_tau_bounds(self, tau):
        with pytest.raises(ValueError):
            quantile_score([record(0.0, 0.0)], tau)


class TestLogPredictive:
    def test_standard_normal_at_zero(self):
        per, total = lpl([record(0.0, 0.0)], min_draws=1)
        assert total == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)
        assert total == pytest.approx(-0.918938533, abs=1e-9)

    def test_duplicate_draws(self):
        one = lpl([record(0.3, 0.0, 2.0)], min_draws=1)[1]
        two = lpl([record(0.3, [0.0, 0.0], 2.0)], min_draws=1)[1]
        assert two == pytest.approx(one, abs=1e-12)

    def test_far_tail_is_finite(self):
        total = lpl([record(10.0, 0.0)], min_draws=1)[1]
        assert total == pytest.approx(-50 - 0.5 * math.log(2 * math.pi), abs=1e-9)

    def test_deep_tail_mixture_finite(self):
        total = lpl([record(60.0, [0.0, 1.0], 1.0)], min_draws=1)[1]
        assert np.isfinite(total)

    def test_matches_scipy_mixture(self, rng):
        means, var = rng.normal(size=200), rng.uniform(0.5, 2, 200)
        r = record(0.7, means, var)
        ref = math.log(np.mean(stats.norm.pdf(0.7, means, np.sqrt(var))))
        assert lpl([r])[1] == pytest.approx(ref, rel=1e-10)

    def test_too_few_draws(self):
        with pytest.raises(InsufficientDrawsError):
            lpl([record(0.0, np.zeros(5))])


class TestPip:
    def chain(self, delta):
        delta = np.asarray(delta)
        return SimpleNamespace(delta=delta, n_draws=delta.shape[0])

    def test_all_sigmoid(self):
        per, avg = pip(self.chain(np.full((20, 3), 2)))
        np.testing.assert_array_equal(avg, [0, 1, 0, 0])
        np.testing.assert_array_equal(per, np.tile([0, 1, 0, 0], (3, 1)))

    def test_uniform_frequencies(self, rng):
        _, avg = pip(self.chain(rng.integers(1, 5, size=(10_000, 1))))
        np.testing.assert_allclose(avg, 0.25, atol=0.02)

    def test_rows_sum_to_one(self, rng):
        per, avg = pip(self.chain(rng.integers(1, 5, size=(37, 5))))
        np.testing.assert_allclose(per.sum(axis=1), 1.0)
        assert avg.sum() == pytest.approx(1.0)

    def test_empty_chain(self):
        with pytest.raises(InsufficientDrawsError):
            pip(self.chain(np.zeros((0, 2), dtype=int)))


class TestR2:
    def chain(self, fitted):
        return SimpleNamespace(conditional_means=lambda X: np.atleast_2d(fitted))

    def test_exact_fit(self, rng):
        data = Dataset(rng.normal(size=20), np.ones((20, 1)))
        assert insample_r2(self.chain(data.y), data) == pytest.approx(1.0)

    def test_mean_fit(self, rng):
        data = Dataset(rng.normal(size=20), np.ones((20, 1)))
        assert insample_r2(self.chain(np.full(20, data.y.mean())), data) == pytest.approx(0.0)

    def test_relative_identical(self):
        assert relative_r2(0.37, 0.37) == 1.0


class TestDieboldMariano:
    def test_alternating_differential(self):
        d = np.tile([1.0, -1.0], 50)
        stat, p = dm_test(d, np.zeros(100))
        assert stat == pytest.approx(0.0, abs=1e-12)
        assert p == pytest.approx(1.0)

    def test_zero_differential(self):
        with pytest.raises(DegenerateTestError):
            dm_test(np.ones(50), np.ones(50))

    def test_clt_scale(self):
        stats_ = [dm_test(np.random.default_rng(s).normal(0.5, 1, 1000), np.zeros(1000))[0]
                  for s in range(40)]
        assert np.mean(stats_) == pytest.approx(0.5 * math.sqrt(1000), abs=1.5)

    def test_negative_favours_first(self, rng):
        stat, p = dm_test(np.zeros(200), rng.normal(1.0, 1.0, 200))
        assert stat < 0 and p < 0.01

    def test_horizon_uses_bartlett_lags(self, rng):
        d = rng.normal(size=300)
        stat, _ = dm_test(d, np.zeros(300), h=3)
        assert stat == pytest.approx(d.mean() / math.sqrt(bartlett_lrv(d, 2) / 300))

    def test_bartlett_weights(self):
        d = np.array([1.0, -1.0, 2.0, 0.0])
        e = d - d.mean()
        ref = (e @ e + 2 * 0.5 * (e[1:] @ e[:-1])) / 4
        assert bartlett_lrv(d, 1) == pytest.approx(ref)

    def test_short_series(self):
        with pytest.raises(ValueError):
            dm_test(np.ones(5), np.zeros(5))


class TestFluctuation:
    def test_newey_west_rule(self):
        assert newey_west_lags(100) == 4
        assert newey_west_lags(200) == 4
        assert newey_west_lags(1000) == 6

    def test_sign_preservation(self, rng):
        res = fluctuation_test(1.0 + rng.normal(size=200), 0.3)
        assert np.all(res.statistics > 0)
        assert res.window == 60

    def test_crossing_near_midpoint(self, rng):
        n = 200
        d = np.where(np.arange(n) < n // 2, 1.0, -1.0) + 0.3 * rng.normal(size=n)
        res = fluctuation_test(d, 0.2)
        cross = res.centers[np.flatnonzero(np.diff(np.sign(res.statistics)))]
        assert cross.size >= 1
        assert np.all(np.abs(cross - n / 2) < 0.1 * n)

    def test_size_under_null(self):
        rng = np.random.default_rng(8)
        inside = [not fluctuation_test(rng.normal(size=200), 0.3).rejects for _ in range(300)]
        assert np.mean(inside) >= 0.92

    def test_critical_values_match_brownian_limit(self):
        rng = np.random.default_rng(2)
        for frac in (0.1, 0.3, 0.5, 0.7, 0.9):
            mc = brownian_fluctuation_quantile(frac, 20_000, 500, rng)
            assert gr_critical_value(frac) == pytest.approx(mc, rel=0.03)

    def test_interpolation(self):
        assert gr_critical_value(0.3) == GR_CRITICAL_05[2]
        assert gr_critical_value(0.25) == pytest.approx(0.5 * (GR_CRITICAL_05[1] + GR_CRITICAL_05[2]))
        assert np.all(np.diff(GR_CRITICAL_05) < 0) and GR_WINDOW_SHARES.size == 9

    def test_invalid_window(self):
        with pytest.raises(ValueError):
            fluctuation_test(np.ones(20), 0.3)
        with pytest.raises(ValueError):
            fluctuation_test(np.ones(200), 1.2)

    def test_constant_differential_degenerate(self):
        with pytest.raises(DegenerateTestError):
            fluctuation_test(np.ones(200), 0.3)


class TestEfficiency:
    def test_independent_draws(self, rng):
        assert 0.8 <= inefficiency_factor(rng.normal(size=10_000)) <= 1.3

    def test_ar1_matches_analytic(self, rng):
        x = simulate_ar1(0.9, 50_000, rng)
        assert inefficiency_factor(x) == pytest.approx(ar1_inefficiency(0.9), rel=0.3)

    def test_requires_draws(self):
        with pytest.raises(InsufficientDrawsError):
            inefficiency_factor(np.arange(50.0))

    def test_constant_trace(self):
        with pytest.raises(DegenerateTestError):
            inefficiency_factor(np.ones(500))


class TestRafteryLewis:
    def test_independent_draws_need_minimum(self, rng):
        # With independent draws the run length reduces to the binomial minimum.
        n_min = math.ceil(0.025 * 0.975 * stats.norm.ppf(0.975) ** 2 / 0.005**2)
        assert n_min == 3746
        n = raftery_lewis(rng.normal(size=20_000), r=0.005)
        assert 0.8 * n_min <= n <= 1.3 * n_min

    def test_dependence_lengthens_run(self, rng):
        iid = raftery_lewis(rng.normal(size=20_000))
        ar = raftery_lewis(simulate_ar1(0.95, 20_000, rng))
        assert ar > 3 * iid

    def test_too_short(self, rng):
        with pytest.raises(InsufficientDrawsError):
            raftery_lewis(rng.normal(size=200), r=0.005)


class TestOrderingAndOutput:
    def test_permutation_invariance(self, rng):
        recs = [record(y, rng.normal(size=120), rng.uniform(0.5, 1.5, 120), rng.normal(size=120))
                for y in rng.normal(size=25)]
        shuffled = [recs[i] for i in rng.permutation(25)]
        a, b = summary_metrics(recs), summary_metrics(shuffled)
        for key in a:
            assert b[key] == pytest.approx(a[key], rel=1e-12)

    def test_tidy_csv(self, tmp_path):
        rows = tidy_rows("BNN", "toy", {"RMSE": 0.5, "LPL": -12.0})
        write_tidy_csv(tmp_path / "m.csv", rows)
        with open(tmp_path / "m.csv") as fh:
            got = list(csv.DictReader(fh))
        assert [r["metric"] for r in got] == ["RMSE", "LPL"]
        assert got[0] == {"model": "BNN", "dataset": "toy", "metric": "RMSE", "value": "0.5"}
