import math

import numpy as np
import pytest

from prefabund.core import CovariateSeries
from prefabund.derived import (
    baseline_first_increase,
    growth_curve,
    growth_rate_median,
    phenometric_psi,
    rmse_abundance,
    summarize_series,
    theta1_preferential_test,
    year_windows,
)

from conftest import make_covariates


class TestGrowthRateMedian:
    def test_stationary_point(self):
        vals = np.column_stack([np.ones(5), np.full(5, 3.3)])
        cov = CovariateSeries(values=vals, day_index=np.arange(1, 6))
        g = growth_rate_median(1.0, np.array([0.4, 0.2]), cov, lambda_prev=7.7, day=3)
        assert g == pytest.approx(0.0, abs=1e-14)

    def test_monte_carlo_median_oracle(self):
        cov = make_covariates(6, seed=1)
        alpha, beta = 0.8, np.array([0.3, 0.5])
        lam_prev, day = 4.2, 4
        closed = growth_rate_median(alpha, beta, cov, lam_prev, day)
        rng = np.random.default_rng(0)
        eps = rng.normal(0.0, math.sqrt(0.25), size=200_000)
        x_now, x_prev = cov.values[day - 1], cov.values[day - 2]
        draws = np.exp(beta @ (x_now - alpha * x_prev)) * lam_prev ** (alpha - 1) \
            * np.exp(eps) - 1.0
        mc_median = np.median(draws)
        assert abs(mc_median - closed) / abs(1.0 + closed) < 0.01

    def test_malthusian_identity_with_noise(self):
        cov = make_covariates(6, seed=2)
        alpha, beta = 0.6, np.array([0.2, 0.4])
        rng = np.random.default_rng(1)
        for _ in range(200):
            lam_prev = float(rng.uniform(0.5, 20.0))
            day = int(rng.integers(2, 7))
            eps = float(rng.normal(0.0, 0.5))
            x_now, x_prev = cov.values[day - 1], cov.values[day - 2]
            g = np.exp(beta @ (x_now - alpha * x_prev)) * lam_prev ** (alpha - 1) \
                * math.exp(eps) - 1.0
            lam_now = math.exp(beta @ (x_now - alpha * x_prev)
                               + alpha * math.log(lam_prev) + eps)
            assert (1.0 + g) * lam_prev == pytest.approx(lam_now, rel=1e-12)

    def test_domain_errors(self):
        cov = make_covariates(5)
        with pytest.raises(ValueError):
            growth_rate_median(0.5, np.array([0.1, 0.2]), cov, lambda_prev=0.0, day=2)
        with pytest.raises(IndexError):
            growth_rate_median(0.5, np.array([0.1, 0.2]), cov, lambda_prev=1.0, day=1)

    def test_intercept_shift_compensation(self):
        # shifting a covariate column and absorbing the shift into the
        # intercept coefficient leaves every growth rate unchanged
        cov_a = make_covariates(8, seed=3)
        c = 2.7
        shifted = cov_a.values.copy()
        shifted[:, 1] += c
        cov_b = CovariateSeries(values=shifted, day_index=cov_a.day_index)
        alpha = 0.65
        beta_a = np.array([0.4, 0.3])
        beta_b = np.array([0.4 - 0.3 * c, 0.3])
        for day in range(2, 9):
            ga = growth_rate_median(alpha, beta_a, cov_a, 5.0, day)
            gb = growth_rate_median(alpha, beta_b, cov_b, 5.0, day)
            assert ga == pytest.approx(gb, rel=1e-12)

    def test_growth_curve_matches_scalar_contract(self):
        cov = make_covariates(7, seed=4)
        rng = np.random.default_rng(5)
        ll = rng.normal(size=7)
        alpha, beta = 0.7, np.array([0.2, 0.3])
        curve = growth_curve(alpha, beta, ll, cov)
        for day in range(2, 8):
            expected = growth_rate_median(alpha, beta, cov, math.exp(ll[day - 2]), day)
            assert curve[day - 2] == pytest.approx(expected, rel=1e-12)


class TestPhenometricPsi:
    def _flip_setup(self, flip_day=3, n=6):
        # hand-set design: growth positive from flip_day onwards
        vals = np.column_stack([np.ones(n), np.zeros(n)])
        vals[flip_day - 1:, 1] = 5.0
        cov = CovariateSeries(values=vals, day_index=np.arange(1, n + 1))
        ll = np.zeros(n)  # lambda_prev = 1 so the power term drops
        return cov, ll

    def test_always_positive_returns_window_start(self):
        cov, ll = self._flip_setup(flip_day=1)
        psi = phenometric_psi(0.5, np.array([1.0, 1.0]), ll, cov, window=(2, 6))
        assert psi == 2

    def test_never_positive_returns_none(self):
        cov, ll = self._flip_setup()
        psi = phenometric_psi(0.5, np.array([-5.0, 0.0]), ll, cov, window=(2, 6))
        assert psi is None

    def test_sign_flip_day(self):
        cov, ll = self._flip_setup(flip_day=3)
        psi = phenometric_psi(0.5, np.array([-1.0, 1.0]), ll, cov, window=(2, 6))
        exhaustive = [day for day in range(2, 7)
                      if growth_rate_median(0.5, np.array([-1.0, 1.0]), cov,
                                            math.exp(ll[day - 2]), day) > 0]
        assert psi == exhaustive[0] == 3

    def test_window_start_monotonicity(self):
        cov = make_covariates(20, seed=6)
        rng = np.random.default_rng(7)
        ll = rng.normal(size=20)
        beta = np.array([-0.3, 0.4])
        values = [phenometric_psi(0.6, beta, ll, cov, window=(start, 20))
                  for start in range(1, 12)]
        assert any(v is not None for v in values)
        for earlier, later in zip(values, values[1:]):
            if earlier is None:
                assert later is None  # shrinking cannot create a positive day
            elif later is not None:
                assert later >= earlier

    def test_window_validation(self):
        cov, ll = self._flip_setup()
        with pytest.raises(IndexError):
            phenometric_psi(0.5, np.array([0.0, 0.0]), ll, cov, window=(3, 9))

    def test_year_windows_blocks_and_dates(self):
        cov = make_covariates(730)
        blocks = year_windows(cov)
        assert blocks == [("year1", 1, 365), ("year2", 366, 730)]
        vals = np.column_stack([np.ones(4), np.zeros(4)])
        dated = CovariateSeries(values=vals, day_index=np.arange(1, 5),
                                dates=["2016-12-30", "2016-12-31", "2017-01-01", "2017-01-02"])
        assert year_windows(dated) == [("2016", 1, 2), ("2017", 3, 4)]

    def test_baseline_first_increase(self):
        obs_days = np.array([0, 3, 5, 8])
        totals = np.array([4, 2, 6, 1])
        assert baseline_first_increase(obs_days, totals, (1, 10)) == 6
        assert baseline_first_increase(obs_days, np.array([4, 3, 2, 1]), (1, 10)) is None

    def test_growth_series_invariant(self):
        from prefabund.derived import GrowthSeries

        days = np.arange(2, 5)
        good = np.array([[0.1, -0.5, 2.0]])
        GrowthSeries(day_index=days, median=good, mean=good, q25=good, q75=good)
        bad = np.array([[0.1, -1.0, 2.0]])
        with pytest.raises(ValueError, match="exceed -1"):
            GrowthSeries(day_index=days, median=bad, mean=good, q25=good, q75=good)

    def test_phenometric_posterior_invariant(self):
        from prefabund.derived import PhenometricPosterior

        windows = [("y1", 1, 365)]
        post = PhenometricPosterior(rows=[("y1", 1, 0, 120), ("y1", 1, 1, None),
                                          ("y1", 1, 2, 130)], windows=windows)
        assert post.median_psi("y1") == 125.0
        with pytest.raises(ValueError, match="outside"):
            PhenometricPosterior(rows=[("y1", 1, 0, 400)], windows=windows)
        with pytest.raises(RuntimeError):
            PhenometricPosterior(rows=[("y1", 1, 0, None)], windows=windows).median_psi("y1")

    def test_psi_posterior_plug_variants(self):
        from prefabund.derived import psi_posterior
        from prefabund.mcmc import McmcConfig, PosteriorDraws, PREFERENTIAL

        cov = make_covariates(8, seed=12)
        m = 6
        rng = np.random.default_rng(13)
        draws = PosteriorDraws(
            variant=PREFERENTIAL,
            iteration=np.arange(m), chain=np.zeros(m, dtype=int),
            alpha=np.full((m, 1), 0.5), beta=rng.normal(size=(m, 1, 2)),
            sigma2=np.ones(m), mu_beta=np.zeros((m, 2)),
            sigma_beta=np.broadcast_to(np.eye(2), (m, 2, 2)),
            theta=np.zeros((m, 2)), lambda_tilde=np.ones(m), z=np.zeros((m, 8)),
            loglambda=rng.normal(size=(m, 1, 8)),
            loglambda_iteration=np.arange(m), loglambda_chain=np.zeros(m, dtype=int),
            acceptance={}, diagnostics={},
            config=McmcConfig(n_iterations=m + 1, burn_in=0, thin=1),
            day_index=np.arange(1, 9),
        )
        windows = [("w", 1, 8)]
        per_draw = psi_posterior(draws, cov, windows, plug="draw")
        med_path = psi_posterior(draws, cov, windows, plug="median")
        assert len(per_draw.rows) == len(med_path.rows) == m
        median = np.quantile(draws.loglambda, 0.5, axis=0)[0]
        for k, row in enumerate(med_path.rows):
            expected = phenometric_psi(0.5, draws.beta[k, 0], median, cov, (1, 8))
            assert row[3] == (None if expected is None else expected)
        with pytest.raises(ValueError):
            psi_posterior(draws, cov, windows, plug="mode")


class TestRmse:
    def test_exact_match(self):
        assert rmse_abundance(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0

    def test_constant_offset(self):
        x = np.array([5.0, 9.0, 1.0])
        assert rmse_abundance(x + 2.0, x) == pytest.approx(2.0)

    def test_direct_formula(self):
        got = rmse_abundance(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 5.0]))
        assert got == pytest.approx(math.sqrt(4.0 / 3.0))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            rmse_abundance(np.ones(3), np.ones(4))

    def test_triangle_bound(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            a, b, c = rng.normal(size=(3, 20))
            assert rmse_abundance(a, c) <= rmse_abundance(a, b) + rmse_abundance(b, c) + 1e-12


class TestSummarizeSeries:
    def test_identical_draws_zero_width(self):
        draws = np.tile(np.log([[2.0, 3.0, 4.0]]), (10, 1, 1))
        out = summarize_series(draws)
        np.testing.assert_allclose(out[0.5][0], out[0.5][1])
        np.testing.assert_allclose(out["median"], [[2.0, 3.0, 4.0]])

    def test_two_draw_band_between_values(self):
        draws = np.log(np.array([[[1.0]], [[3.0]]]))
        out = summarize_series(draws)
        lo, hi = out[0.5]
        assert 1.0 <= lo[0, 0] <= hi[0, 0] <= 3.0

    def test_lognormal_median(self):
        rng = np.random.default_rng(9)
        mu = 1.3
        draws = rng.normal(mu, 0.8, size=(10_000, 1, 1))
        out = summarize_series(draws)
        assert out["median"][0, 0] == pytest.approx(math.exp(mu), rel=0.01)

    def test_band_nesting(self):
        rng = np.random.default_rng(10)
        draws = rng.normal(size=(500, 2, 7))
        out = summarize_series(draws)
        lo50, hi50 = out[0.5]
        lo95, hi95 = out[0.95]
        assert np.all(lo95 <= lo50) and np.all(hi50 <= hi95)

    def test_empty_draws_error(self):
        with pytest.raises(RuntimeError):
            summarize_series(np.empty((0, 1, 3)))

    def test_median_beats_mean_for_skewed_draws(self):
        # absolute-loss point summary: for sigma = 0.8 log-normal samples the
        # sample median is the lower-variance estimator across resamples
        rng = np.random.default_rng(11)
        med_vals, mean_vals = [], []
        for _ in range(1000):
            x = np.exp(rng.normal(0.0, 0.8, size=200))
            med_vals.append(np.median(x))
            mean_vals.append(np.mean(x))
        assert np.var(med_vals) < np.var(mean_vals)


class TestTheta1Test:
    def _draws(self, t1_values):
        from prefabund.mcmc import McmcConfig, PosteriorDraws, PREFERENTIAL

        m = len(t1_values)
        theta = np.column_stack([np.zeros(m), np.asarray(t1_values, dtype=float)])
        return PosteriorDraws(
            variant=PREFERENTIAL,
            iteration=np.arange(m), chain=np.zeros(m, dtype=int),
            alpha=np.zeros((m, 1)), beta=np.zeros((m, 1, 2)), sigma2=np.ones(m),
            mu_beta=np.zeros((m, 2)), sigma_beta=np.broadcast_to(np.eye(2), (m, 2, 2)),
            theta=theta, lambda_tilde=np.ones(m), z=np.zeros((m, 3)),
            loglambda=np.zeros((m, 1, 3)), loglambda_iteration=np.arange(m),
            loglambda_chain=np.zeros(m, dtype=int),
            acceptance={}, diagnostics={}, config=McmcConfig(n_iterations=m + 1, burn_in=0, thin=1),
            day_index=np.arange(1, 4),
        )

    def test_all_positive(self):
        interval, p = theta1_preferential_test(self._draws(np.linspace(0.5, 2.0, 100)))
        assert p == 1.0
        assert interval[0] > 0

    def test_symmetric_draws(self):
        rng = np.random.default_rng(12)
        t1 = rng.normal(0.0, 1.0, size=20_000)
        interval, p = theta1_preferential_test(self._draws(t1))
        assert p == pytest.approx(0.5, abs=0.02)
        assert interval[0] < 0 < interval[1]

    def test_non_preferential_rejected(self):
        draws = self._draws(np.ones(10))
        draws.theta = None
        draws.variant = "non_preferential"
        with pytest.raises(RuntimeError):
            theta1_preferential_test(draws)
