import math

import numpy as np
import pytest
from scipy.stats import norm

from prefabund.core import (
    CovariateSeries,
    LatentState,
    ObservationSet,
    default_hyperpriors,
    inclusion_probability,
    norm_cdf,
    observation_logdensity,
    process_logdensity,
    process_mean,
    validate_params,
)

from conftest import make_covariates, make_observations, make_params


class TestTypes:
    def test_covariates_require_intercept(self):
        vals = np.column_stack([np.full(5, 2.0), np.ones(5)])
        with pytest.raises(ValueError, match="intercept"):
            CovariateSeries(values=vals, day_index=np.arange(5))

    def test_covariates_require_two_days(self):
        with pytest.raises(ValueError, match="2 days"):
            CovariateSeries(values=np.ones((1, 1)), day_index=np.array([1]))

    def test_covariates_reject_nonfinite(self):
        vals = np.column_stack([np.ones(5), np.full(5, np.nan)])
        with pytest.raises(ValueError, match="finite"):
            CovariateSeries(values=vals, day_index=np.arange(5))

    def test_latent_state_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="finite"):
            LatentState(log_lambda=np.array([[0.0, np.inf]]))

    def test_observation_set_tau_consistency(self):
        with pytest.raises(ValueError):
            ObservationSet(tau=[1, 0, 1], observed_days=[0], counts=[[1]], effort=[1.0])

    def test_observation_set_effort_product_rule(self):
        obs = make_observations(4, observed=[1, 3], counts=[[2, 0]], effort=[0.5, 0.25])
        assert obs.n_observed == 2
        with pytest.raises(ValueError, match="trap_fraction"):
            ObservationSet(
                tau=obs.tau, observed_days=obs.observed_days, counts=obs.counts,
                effort=[0.5, 0.25], trap_fraction=[0.5, 0.5], duration_days=[1.0, 1.0],
            )

    def test_observation_set_rejects_fractional_counts(self):
        with pytest.raises(ValueError, match="integer"):
            ObservationSet(tau=[1, 0], observed_days=[0], counts=[[1.5]], effort=[1.0])

    def test_validate_params_alpha_bound(self, cov10):
        params = make_params(alpha=1.2)
        with pytest.raises(ValueError, match="alpha"):
            validate_params(params)
        validate_params(params, require_stationary=False)

    def test_validate_params_z_sign(self):
        obs = make_observations(3, observed=[0, 2], counts=[[1, 2]])
        params = make_params(n_days=3)
        params.z = np.array([0.5, -0.1, 0.2])
        validate_params(params, obs)
        params.z = np.array([-0.5, -0.1, 0.2])
        with pytest.raises(ValueError, match="sign of z"):
            validate_params(params, obs)

    def test_hyperpriors_reject_bad_scale(self):
        hyper = default_hyperpriors(1, 2)
        with pytest.raises(ValueError, match="sigma2_1"):
            type(hyper)(**{**vars(hyper), "sigma2_1": -1.0})


class TestProcessMean:
    def test_zero_autoregression_gives_pure_trend(self, cov10):
        params = make_params(alpha=0.0)
        mean = process_mean(params, cov10, np.array([3.7]), day=5)
        expected = params.beta @ cov10.values[4]
        assert mean == pytest.approx(expected)

    def test_random_walk_limit(self):
        # alpha=1 with unchanged covariates keeps the previous value
        vals = np.column_stack([np.ones(4), np.full(4, 2.5)])
        cov = CovariateSeries(values=vals, day_index=np.arange(1, 5))
        params = make_params(alpha=1.0)
        prev = np.array([1.234])
        mean = process_mean(params, cov, prev, day=3)
        assert mean == pytest.approx(prev)

    def test_hand_arithmetic_instance(self):
        vals = np.array([[1.0, 1.0], [1.0, 2.0]])
        cov = CovariateSeries(values=vals, day_index=np.array([1, 2]))
        params = make_params(alpha=0.98, beta=[[0.1, 0.3]])
        mean = process_mean(params, cov, np.array([1.0]), day=2)
        assert mean[0] == pytest.approx(1.288, abs=1e-12)

    def test_day_out_of_range(self, cov10):
        params = make_params()
        with pytest.raises(IndexError):
            process_mean(params, cov10, np.array([0.0]), day=1)
        with pytest.raises(IndexError):
            process_mean(params, cov10, np.array([0.0]), day=11)

    def test_nonfinite_input_rejected(self, cov10):
        params = make_params()
        with pytest.raises(ValueError):
            process_mean(params, cov10, np.array([np.nan]), day=2)

    def test_linearity_in_prev_and_beta(self, cov10):
        # superposition on random inputs
        rng = np.random.default_rng(42)
        for _ in range(20):
            params = make_params(alpha=float(rng.uniform(-0.9, 0.9)))
            p1 = rng.standard_normal(1)
            p2 = rng.standard_normal(1)
            a, b = rng.standard_normal(2)
            lhs = process_mean(params, cov10, a * p1 + b * p2, day=4)
            rhs = (
                a * process_mean(params, cov10, p1, day=4)
                + b * process_mean(params, cov10, p2, day=4)
                + (1 - a - b) * (params.beta @ cov10.values[3]
                                 - params.alpha * (params.beta @ cov10.values[2]))
            )
            np.testing.assert_allclose(lhs, rhs, atol=1e-10)
            b1 = rng.standard_normal((1, 2))
            b2 = rng.standard_normal((1, 2))
            pa = make_params(alpha=float(params.alpha[0]), beta=b1 + b2)
            pb = make_params(alpha=float(params.alpha[0]), beta=b1)
            pc = make_params(alpha=float(params.alpha[0]), beta=b2)
            lhs = process_mean(pa, cov10, np.zeros(1), day=4)
            rhs = process_mean(pb, cov10, np.zeros(1), day=4) \
                + process_mean(pc, cov10, np.zeros(1), day=4)
            np.testing.assert_allclose(lhs, rhs, atol=1e-10)


class TestProcessLogdensity:
    def test_single_day_state_is_initial_term_only(self, cov10, hyper_default):
        params = make_params()
        state = LatentState(log_lambda=np.array([[1.3]]))
        got = process_logdensity(state, params, cov10, hyper_default)
        expected = norm.logpdf(1.3, loc=hyper_default.mu1[0],
                               scale=math.sqrt(hyper_default.sigma2_1))
        assert got == pytest.approx(float(expected))

    def test_state_at_conditional_means_unit_variance(self, cov10, hyper_default):
        hyper = type(hyper_default)(**{**vars(hyper_default), "sigma2_1": 1.0})
        params = make_params(sigma2=1.0)
        n = cov10.n_days
        ll = np.empty((1, n))
        ll[0, 0] = hyper.mu1[0]
        for day in range(2, n + 1):
            ll[0, day - 1] = process_mean(params, cov10, ll[:, day - 2], day)[0]
        state = LatentState(log_lambda=ll)
        got = process_logdensity(state, params, cov10, hyper)
        assert got == pytest.approx(-(n * 1 / 2) * math.log(2 * math.pi))

    def test_term_by_term_oracle(self, hyper_default):
        # 3-day, 1-species instance vs individually evaluated normal densities
        cov = make_covariates(3, seed=5)
        params = make_params(alpha=0.4, sigma2=0.2)
        rng = np.random.default_rng(11)
        ll = rng.standard_normal((1, 3))
        state = LatentState(log_lambda=ll)
        expected = norm.logpdf(ll[0, 0], loc=hyper_default.mu1[0],
                               scale=math.sqrt(hyper_default.sigma2_1))
        for day in (2, 3):
            m = process_mean(params, cov, ll[:, day - 2], day)[0]
            expected += norm.logpdf(ll[0, day - 1], loc=m, scale=math.sqrt(params.sigma2))
        got = process_logdensity(state, params, cov, hyper_default)
        assert got == pytest.approx(float(expected), rel=1e-12)

    def test_moving_final_day_off_mean_decreases_density(self, cov10, hyper_default):
        params = make_params()
        rng = np.random.default_rng(3)
        ll = rng.standard_normal((1, 10))
        base = LatentState(log_lambda=ll.copy())
        m = process_mean(params, cov10, ll[:, 8], day=10)[0]
        ll_on = ll.copy()
        ll_on[0, 9] = m
        on_mean = process_logdensity(LatentState(log_lambda=ll_on), params, cov10, hyper_default)
        for delta in (0.5, -1.0, 2.0):
            ll_off = ll_on.copy()
            ll_off[0, 9] = m + delta
            off = process_logdensity(LatentState(log_lambda=ll_off), params, cov10, hyper_default)
            assert off < on_mean

    def test_dimension_mismatch(self, cov10, hyper_default):
        params = make_params()
        state = LatentState(log_lambda=np.zeros((1, 12)))
        with pytest.raises(ValueError, match="cover"):
            process_logdensity(state, params, cov10, hyper_default)

    def test_exp_log_round_trip_stability(self, cov10, hyper_default):
        params = make_params()
        rng = np.random.default_rng(8)
        ll = rng.standard_normal((1, 10))
        state = LatentState(log_lambda=ll)
        round_trip = LatentState(log_lambda=np.log(np.exp(ll)))
        a = process_logdensity(state, params, cov10, hyper_default)
        b = process_logdensity(round_trip, params, cov10, hyper_default)
        assert abs(a - b) < 1e-10


class TestObservationLogdensity:
    def test_zero_count_unit_rate(self):
        assert observation_logdensity([0], [1.0], 1.0) == pytest.approx(-1.0)

    def test_direct_formula(self):
        got = observation_logdensity([2], [3.0], 2.0)
        assert got == pytest.approx(2 * math.log(6.0) - 6.0 - math.log(2.0))

    def test_rate_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            y = rng.poisson(4.0, size=3)
            lam = rng.uniform(0.5, 5.0, size=3)
            w = float(rng.uniform(0.2, 3.0))
            c = float(rng.uniform(0.1, 10.0))
            a = observation_logdensity(y, lam, w)
            b = observation_logdensity(y, c * lam, w / c)
            assert a == pytest.approx(b, rel=1e-12)

    def test_zero_rate_rejected(self):
        with pytest.raises(ValueError):
            observation_logdensity([1], [0.0], 1.0)
        with pytest.raises(ValueError):
            observation_logdensity([1], [1.0], 0.0)

    def test_matches_scipy_poisson(self):
        from scipy.stats import poisson

        y = np.array([0, 4, 17])
        lam = np.array([0.3, 2.0, 9.0])
        w = 1.7
        got = observation_logdensity(y, lam, w)
        assert got == pytest.approx(float(poisson.logpmf(y, lam * w).sum()), rel=1e-12)


class TestInclusionProbability:
    def test_flat_coefficients(self):
        assert inclusion_probability(np.zeros(2), 3.0, 10.0) == pytest.approx(0.5)
        assert inclusion_probability(np.zeros(2), 30.0, 10.0) == pytest.approx(0.5)

    def test_above_threshold_value(self):
        got = inclusion_probability(np.array([0.0, 1.96]), 15.0, 15.0)
        assert got == pytest.approx(0.9750021048517795, rel=1e-10)

    def test_deep_tail(self):
        got = inclusion_probability(np.array([-5.0, 0.0]), 1.0, 10.0)
        assert got == pytest.approx(2.866515718791939e-07, rel=1e-9)

    def test_indicator_closed_at_equality(self):
        below = inclusion_probability(np.array([0.0, 1.0]), 9.999999, 10.0)
        at = inclusion_probability(np.array([0.0, 1.0]), 10.0, 10.0)
        assert below == pytest.approx(0.5)
        assert at == pytest.approx(float(norm.cdf(1.0)), rel=1e-10)

    def test_step_monotonicity(self):
        grid = np.linspace(0.0, 30.0, 301)
        for t1 in (1.3, -0.7):
            probs = [inclusion_probability(np.array([0.1, t1]), g, 12.0) for g in grid]
            diffs = np.diff(probs)
            if t1 > 0:
                assert np.all(diffs >= 0)
            else:
                assert np.all(diffs <= 0)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            inclusion_probability(np.array([np.nan, 0.0]), 1.0, 1.0)

    def test_norm_cdf_accuracy_and_clamping(self):
        xs = np.linspace(-8.0, 8.0, 1601)
        ref = norm.cdf(xs)
        got = norm_cdf(xs)
        assert np.max(np.abs(got / ref - 1.0)) < 1e-12
        assert norm_cdf(-40.0) >= 1e-300
        assert norm_cdf(40.0) <= 1.0 - 1e-16
        assert math.isfinite(math.log(norm_cdf(-40.0)))
        assert math.isfinite(math.log1p(-norm_cdf(40.0)))
