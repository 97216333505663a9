import math

import numpy as np
from django.test import TestCase

from shearflow.exceptions import ConfigurationError, FitError, GevreyOverflowError
from shearflow.multipliers import (
    MultiplierKind,
    WeightContext,
    check_all_properties,
    check_d_lower_bounds,
    check_tiling,
    check_w_nr_monotone,
    check_w_unity,
    critical_time,
    critical_times,
    d_value,
    dtw_ratio,
    growth_fit,
    lambda_limit,
    lambda_rate,
    lambda_schedule,
    log_multiplier,
    log_w_nr,
    multiplier_eval,
    multiplier_table,
    validate_weight_parameters,
    w_eval,
)


class TestCriticalTimes(TestCase):
    """Test cases for critical times and their intervals"""

    def test_critical_time_values(self):
        """Test t_{k,eta} = |eta/k| - |eta|/(2|k|(|k|+1)) and t_{0,eta} = 2|eta|"""
        self.assertAlmostEqual(critical_time(1, 100.0), 75.0)
        self.assertAlmostEqual(critical_time(-2, 100.0), 50.0 - 100.0 / 12.0)
        self.assertAlmostEqual(critical_time(0, -30.0), 60.0)

    def test_table(self):
        """Test the intervals of eta = 100"""
        table = critical_times(100.0)
        self.assertEqual(len(table.entries), 10)
        first = table.entries[0]
        self.assertEqual(first.k, 1)
        self.assertAlmostEqual(first.end, 200.0)
        self.assertAlmostEqual(first.start, 75.0)
        self.assertTrue(first.resonant)
        # t_10 is below 2 sqrt(eta) = 20
        self.assertFalse(table.entries[-1].resonant)
        self.assertEqual(table.interval_for(80.0).k, 1)
        self.assertIsNone(table.interval_for(250.0))

    def test_small_eta_has_no_intervals(self):
        """Test that |eta| < 1 gives an empty table"""
        self.assertEqual(critical_times(0.5).entries, ())

    def test_tiling(self):
        """Test that intervals tile [t_E, 2 eta] exactly"""
        self.assertTrue(check_tiling([1.0, 4.0, 37.5, 100.0, 1234.5, 10000.0]))


class TestWeightContext(TestCase):
    """Test cases for weight parameter validation"""

    def test_defaults_are_valid(self):
        """Test that the default parameters pass every rule"""
        ctx = WeightContext()
        self.assertGreater(lambda_limit(ctx), 0.5 * (ctx.lambda0 + ctx.lambda_prime))

    def test_sigma_rule(self):
        """Test that sigma=10, beta=5, alpha=1 violates beta + 3 alpha + 8 < sigma"""
        with self.assertRaises(ConfigurationError) as ctx:
            WeightContext(sigma=10.0, beta=5.0, alpha=1.0)
        self.assertEqual(ctx.exception.rule, 'β + 3α + 8 < σ')

    def test_beta_rule(self):
        """Test that beta must exceed 3 alpha + 2"""
        params = WeightContext().as_dict()
        params.update(beta=4.0, sigma=30.0)
        result = validate_weight_parameters(params)
        self.assertFalse(result['valid'])
        self.assertEqual(result['rule'], 'β > 3α + 2')

    def test_lambda_limit_rule(self):
        """Test that a large delta_lambda drives lambda(inf) below the midpoint"""
        params = WeightContext().as_dict()
        params['delta_lambda'] = 5.0
        result = validate_weight_parameters(params)
        self.assertFalse(result['valid'])
        self.assertEqual(result['rule'], 'λ(∞) > (λ + λ′)/2')

    def test_q_tilde_rule(self):
        """Test that q_tilde = 0.55 needs s > 0.9"""
        params = WeightContext().as_dict()
        params['q_tilde'] = 0.55
        self.assertFalse(validate_weight_parameters(params)['valid'])
        params['s'] = 0.95
        self.assertTrue(validate_weight_parameters(params)['valid'])


class TestLambdaSchedule(TestCase):
    """Test cases for the radius lambda(t)"""

    def setUp(self):
        self.ctx = WeightContext()

    def test_initial_value(self):
        """Test lambda = 3/4 lambda + 1/4 lambda' before the switch time"""
        self.assertAlmostEqual(lambda_schedule(0.0, self.ctx), 0.875)
        self.assertEqual(lambda_rate(0.0, self.ctx), 0.0)

    def test_decreasing(self):
        """Test that lambda decreases towards its limit"""
        values = [lambda_schedule(t, self.ctx) for t in (1.0, 10.0, 100.0, 1000.0)]
        self.assertTrue(all(a > b for a, b in zip(values, values[1:])))
        self.assertGreater(values[-1], lambda_limit(self.ctx))

    def test_rate_matches_difference(self):
        """Test the closed-form rate against a centred difference"""
        t = 5.0
        h = 1e-4
        numeric = (lambda_schedule(t + h, self.ctx) - lambda_schedule(t - h, self.ctx)) / (2 * h)
        self.assertAlmostEqual(lambda_rate(t, self.ctx) / numeric, 1.0, places=5)


class TestWeights(TestCase):
    """Test cases for the w weights"""

    def setUp(self):
        self.ctx = WeightContext()

    def test_unity_after_two_eta(self):
        """Test that w = 1 for t >= 2 max(|eta|, 10)"""
        self.assertEqual(w_eval(3, 50.0, 101.0, self.ctx), 1.0)
        self.assertEqual(w_eval(1, 5.0, 21.0, self.ctx), 1.0)
        self.assertTrue(check_w_unity(self.ctx, np.random.default_rng(1), n=500))

    def test_loss_at_start(self):
        """Test that w is below one before the critical times"""
        self.assertLess(w_eval(0, 100.0, 0.0, self.ctx), 1.0)
        self.assertLess(w_eval(0, 1000.0, 0.0, self.ctx), w_eval(0, 100.0, 0.0, self.ctx))

    def test_reflection(self):
        """Test w_k(t, eta) = w_{-k}(t, -eta)"""
        self.assertEqual(w_eval(2, -100.0, 40.0, self.ctx), w_eval(-2, 100.0, 40.0, self.ctx))

    def test_resonant_weight_is_smaller(self):
        """Test w_R <= w_NR on the resonant interval of k"""
        t = 80.0
        self.assertLessEqual(w_eval(1, 100.0, t, self.ctx), w_eval(0, 100.0, t, self.ctx))

    def test_nonresonant_monotone(self):
        """Test that w_NR does not decrease in t"""
        self.assertTrue(check_w_nr_monotone(self.ctx, [100.0, 400.0], n=2000))
        self.assertLessEqual(log_w_nr(100.0, 10.0, self.ctx), log_w_nr(100.0, 60.0, self.ctx))

    def test_dtw_vanishes_outside_intervals(self):
        """Test that dt w/w is zero after 2 eta"""
        self.assertEqual(dtw_ratio(1, 100.0, 250.0, self.ctx), 0.0)
        self.assertGreater(dtw_ratio(1, 100.0, 80.0, self.ctx), 0.0)


class TestMultipliers(TestCase):
    """Test cases for multiplier evaluation"""

    def setUp(self):
        self.ctx = WeightContext(nu=1e-3)

    def test_d_value(self):
        """Test D at the kink t = 2|eta|"""
        self.assertAlmostEqual(float(d_value(20.0, 10.0, self.ctx)), 1.0 / 3.0)
        # nu t^3 = 24 alpha D at the kink
        self.assertAlmostEqual(1e-3 * 20.0 ** 3, 24.0 * float(d_value(20.0, 10.0, self.ctx)))
        self.assertEqual(multiplier_eval('D', 5, 10.0, 20.0, self.ctx), float(d_value(20.0, 10.0, self.ctx)))

    def test_anu_vanishes_on_zero_mode(self):
        """Test that A^nu is zero at k = 0"""
        self.assertEqual(multiplier_eval(MultiplierKind.ANU, 0, 10.0, 5.0, self.ctx), 0.0)
        self.assertGreater(multiplier_eval(MultiplierKind.ANU, 1, 10.0, 5.0, self.ctx), 0.0)

    def test_a_dominates_j(self):
        """Test A >= J since the Gevrey and Sobolev factors are >= 1"""
        self.assertGreaterEqual(log_multiplier('A', 1, 50.0, 10.0, self.ctx),
                                log_multiplier('J', 1, 50.0, 10.0, self.ctx))

    def test_overflow(self):
        """Test that an out-of-range multiplier raises"""
        with self.assertRaises(GevreyOverflowError) as ctx:
            multiplier_eval(MultiplierKind.A, 1, 1e8, 0.0, self.ctx)
        self.assertEqual(ctx.exception.frequency, (1.0, 1e8))

    def test_unknown_kind(self):
        """Test that an unknown kind is rejected"""
        with self.assertRaises(ValueError):
            multiplier_eval('B', 1, 1.0, 0.0, self.ctx)

    def test_table_rows(self):
        """Test table layout and that eta-only kinds ignore k"""
        rows = multiplier_table('A', [0, 1], [10.0, 100.0], [0.0, 5.0], self.ctx)
        self.assertEqual(len(rows), 8)
        self.assertEqual(rows[0][:3], (0.0, 10.0, 0.0))
        rows = multiplier_table('AR', [0, 1, 2], [10.0], [0.0], self.ctx)
        self.assertEqual(len(rows), 1)


class TestGrowthFit(TestCase):
    """Test cases for the initial weight loss fit"""

    def setUp(self):
        self.ctx = WeightContext()

    def test_fit_quality(self):
        """Test r^2 and the slope implied by the construction"""
        fit = growth_fit(np.geomspace(100.0, 10000.0, 40), self.ctx)
        self.assertGreater(fit.r_squared, 0.99)
        self.assertAlmostEqual(fit.mu_construction, 8.0)
        self.assertLess(abs(fit.mu_fit - fit.mu_construction) / fit.mu_construction, 0.15)

    def test_samples_below_range(self):
        """Test that samples under 100 are refused"""
        with self.assertRaises(FitError):
            growth_fit([10.0, 1000.0, 10000.0], self.ctx)

    def test_narrow_span(self):
        """Test that less than two decades is ill-conditioned"""
        with self.assertRaises(FitError):
            growth_fit([100.0, 200.0, 300.0], self.ctx)

    def test_too_few_samples(self):
        """Test that two samples are not enough"""
        with self.assertRaises(FitError):
            growth_fit([100.0, 10000.0], self.ctx)


class TestPropertySuite(TestCase):
    """Test cases for the property suite"""

    def test_d_lower_bounds(self):
        """Test the D lower bounds on random samples"""
        self.assertTrue(check_d_lower_bounds(WeightContext(), np.random.default_rng(0), 100000))

    def test_all_properties(self):
        """Test that the defaults pass the whole suite"""
        details = check_all_properties(WeightContext(), n_samples=20000, seed=0)
        failed = [key for key, value in details.items() if value is False]
        self.assertEqual(failed, [])
        self.assertTrue(details['passed'])
        self.assertTrue(math.isfinite(details['d_ratio_constant']))
