import math

import numpy as np
from django.test import TestCase

from shearflow.exceptions import FitError
from shearflow.fits import DecayKind, DecayModel, fit_decay, fit_power_law, japanese, optional_fit


class FitsTestCase(TestCase):
    """Base test case with a uniform time grid"""

    def setUp(self):
        self.times = np.linspace(0.0, 100.0, 101)


class TestDecayModels(FitsTestCase):
    """Test cases for the decay law fits"""

    def test_power(self):
        """Test recovery of C <t>^p"""
        values = 3.0 * japanese(self.times) ** -1.5
        fit = fit_decay(self.times, values, DecayModel(DecayKind.POWER, (10.0, 100.0)))
        self.assertAlmostEqual(fit.rate, -1.5, places=10)
        self.assertAlmostEqual(fit.coefficient, 3.0, places=8)
        self.assertAlmostEqual(fit.r_squared, 1.0, places=10)
        self.assertEqual(fit.samples, 91)

    def test_exp_nu_t_cubed(self):
        """Test recovery of c in exp(-c nu t^3)"""
        nu = 1e-3
        values = 2.0 * np.exp(-0.4 * nu * self.times ** 3)
        fit = fit_decay(self.times, values, DecayModel('exp_nu_t_cubed', (0.0, 100.0), nu))
        self.assertEqual(fit.kind, DecayKind.EXP_NU_T_CUBED)
        self.assertAlmostEqual(fit.rate, 0.4, places=10)

    def test_poly_nu_t_cubed(self):
        """Test recovery of alpha in <nu t^3>^-alpha"""
        nu = 1e-3
        values = japanese(nu * self.times ** 3) ** -0.75
        fit = fit_decay(self.times, values, DecayModel(DecayKind.POLY_NU_T_CUBED, (1.0, 100.0), nu))
        self.assertAlmostEqual(fit.rate, 0.75, places=10)

    def test_quarter_heat(self):
        """Test recovery of p in <nu t>^p"""
        nu = 0.1
        values = japanese(nu * self.times) ** -0.25
        fit = fit_decay(self.times, values, DecayModel(DecayKind.QUARTER_HEAT, (10.0, 100.0), nu))
        self.assertAlmostEqual(fit.rate, -0.25, places=10)


class TestDecayFitErrors(FitsTestCase):
    """Test cases for data that cannot support a fit"""

    def setUp(self):
        super().setUp()
        self.values = japanese(self.times) ** -1.0

    def test_window_outside_data(self):
        """Test that a window reaching past the samples raises"""
        with self.assertRaises(FitError):
            fit_decay(self.times, self.values, DecayModel(DecayKind.POWER, (10.0, 200.0)))

    def test_empty_window(self):
        """Test that t0 >= t1 raises"""
        with self.assertRaises(FitError):
            fit_decay(self.times, self.values, DecayModel(DecayKind.POWER, (50.0, 50.0)))

    def test_too_few_samples(self):
        """Test that nine samples in the window are not enough"""
        with self.assertRaises(FitError):
            fit_decay(self.times, self.values, DecayModel(DecayKind.POWER, (10.0, 18.0)))

    def test_nonpositive_values(self):
        """Test that a zero in the window raises"""
        values = self.values.copy()
        values[50] = 0.0
        with self.assertRaises(FitError):
            fit_decay(self.times, values, DecayModel(DecayKind.POWER, (10.0, 100.0)))

    def test_viscous_model_without_viscosity(self):
        """Test that nu-dependent laws need nu > 0"""
        with self.assertRaises(FitError):
            fit_decay(self.times, self.values, DecayModel(DecayKind.EXP_NU_T_CUBED, (10.0, 100.0), 0.0))

    def test_length_mismatch(self):
        """Test that times and values must align"""
        with self.assertRaises(FitError):
            fit_decay(self.times, self.values[:-1], DecayModel(DecayKind.POWER, (10.0, 90.0)))

    def test_optional_fit_logs(self):
        """Test that optional_fit returns None with a warning"""
        with self.assertLogs('shearflow.fits', 'WARNING'):
            fit = optional_fit(self.times, self.values, DecayModel(DecayKind.POWER, (10.0, 200.0)))
        self.assertIsNone(fit)


class TestPowerLaw(TestCase):
    """Test cases for log-log scaling fits"""

    def test_exponent(self):
        """Test recovery of the -1/3 onset exponent"""
        nu = np.array([1e-3, 3e-4, 1e-4, 3e-5])
        fit = fit_power_law(nu, 2.0 * nu ** (-1.0 / 3.0))
        self.assertTrue(fit.sufficient)
        self.assertEqual(fit.points, 4)
        self.assertAlmostEqual(fit.exponent, -1.0 / 3.0, places=10)
        self.assertAlmostEqual(fit.prefactor, 2.0, places=8)

    def test_unusable_points_are_dropped(self):
        """Test that nan and nonpositive pairs do not count"""
        fit = fit_power_law([1.0, 2.0, 4.0, 8.0, -1.0], [1.0, 4.0, math.nan, 64.0, 5.0])
        self.assertEqual(fit.points, 3)
        self.assertAlmostEqual(fit.exponent, 2.0, places=10)

    def test_insufficient(self):
        """Test that two points give an insufficient fit"""
        with self.assertLogs('shearflow.fits', 'WARNING'):
            fit = fit_power_law([1.0, 2.0], [1.0, 2.0])
        self.assertFalse(fit.sufficient)
        self.assertTrue(math.isnan(fit.exponent))
