import math
from unittest.mock import MagicMock

import numpy as np
from django.test import TestCase

from shearflow.exceptions import CFLViolationError, ConfigurationError
from shearflow.linear_oracle import kelvin_evolve, stream_symbol
from shearflow.solver import (
    InitialData,
    biot_savart,
    choose_dt,
    circulation,
    enstrophy,
    frame_time,
    initial_field,
    initial_state,
    iterate,
    kinetic_energy,
    lab_field,
    lab_samples,
    make_sim_config,
    nonlinear_rhs,
    remap_shear,
    run,
    step,
    velocity,
)
from shearflow.spectral_core import SpectralField, dealias_mask, l2_norm, make_grid, nyquist_mask


class SolverTestCase(TestCase):
    """Base test case with a small grid and a Gaussian packet at k = 0 and k = 1"""

    def setUp(self):
        self.grid = make_grid(8, 128, 4 * math.pi)
        self.packet = InitialData('gaussian', wavenumbers=(1, 0))

    def config(self, **overrides):
        params = dict(grid=self.grid, nu=1e-2, epsilon=1e-3, initial_data=self.packet, t_max=2.0)
        params.update(overrides)
        return make_sim_config(**params)


class TestInitialData(SolverTestCase):
    """Test cases for initial vorticity"""

    def test_modes(self):
        """Test that each mode gets its conjugate partner and the epsilon scale"""
        config = self.config(initial_data=InitialData('modes', modes=((1, 3, 0.5),)), epsilon=2.0)
        field = initial_field(config)
        self.assertEqual(field.coeffs[1, 3], 1.0)
        self.assertEqual(field.coeffs[-1, -3], 1.0)
        self.assertEqual(np.count_nonzero(field.coeffs), 2)
        self.assertTrue(field.is_hermitian())

    def test_kinetic_energy(self):
        """Test that a single Kelvin mode has energy enstrophy/(k^2 + eta^2)"""
        config = self.config(initial_data=InitialData('modes', modes=((1, 3, 0.5),)), epsilon=2.0)
        state = initial_state(config)
        # eta = 3 pi/L = 0.75
        self.assertAlmostEqual(enstrophy(state), 0.5, places=14)
        self.assertAlmostEqual(kinetic_energy(state), 0.5 / 1.5625, places=14)

    def test_gaussian_is_normalised(self):
        """Test ||omega_in|| = epsilon with zero mean and dealiased support"""
        field = initial_field(self.config())
        self.assertAlmostEqual(l2_norm(field), 1e-3, places=15)
        self.assertEqual(field.coeffs[0, 0], 0.0)
        self.assertFalse(np.any(field.coeffs[~dealias_mask(self.grid)]))
        self.assertTrue(field.is_hermitian())

    def test_random_is_seeded(self):
        """Test that the random spectrum depends only on the seed"""
        data = InitialData('random')
        first = initial_field(self.config(initial_data=data, seed=3))
        again = initial_field(self.config(initial_data=data, seed=3))
        other = initial_field(self.config(initial_data=data, seed=4))
        np.testing.assert_array_equal(first.coeffs, again.coeffs)
        self.assertFalse(np.allclose(first.coeffs, other.coeffs))
        self.assertAlmostEqual(l2_norm(first), 1e-3, places=15)

    def test_invalid_initial_data(self):
        """Test that a mean mode and an unknown kind are refused"""
        with self.assertRaises(ConfigurationError) as ctx:
            self.config(initial_data=InitialData('modes', modes=((0, 0, 1.0),)))
        self.assertEqual(ctx.exception.rule, 'vorticity is mean-zero')
        with self.assertRaises(ConfigurationError):
            self.config(initial_data=InitialData('vortex'))
        with self.assertRaises(ConfigurationError):
            self.config(integrator='euler')


class TestLinearRun(SolverTestCase):
    """Test cases for runs without the nonlinearity"""

    def test_matches_kelvin_solution(self):
        """Test that a linear run lands on the closed-form solution after remaps"""
        config = self.config(nonlinear=False)
        trajectory = run(config)
        final = trajectory.final
        self.assertEqual(final.remap_count, 8)
        self.assertAlmostEqual(final.t, 2.0, places=12)
        expected = kelvin_evolve(initial_field(config), config.nu, 2.0).omega
        difference = l2_norm(lab_field(final) - expected)
        self.assertLess(difference / l2_norm(expected), 1e-10)

    def test_matches_kelvin_between_remaps(self):
        """Test that a linear run stopped between remap times matches the closed-form solution"""
        config = self.config(nonlinear=False, t_max=2.1)
        final = run(config).final
        self.assertEqual(final.remap_count, 8)
        self.assertAlmostEqual(frame_time(final), 0.1, places=12)
        expected = kelvin_evolve(initial_field(config), config.nu, 2.1)
        self.assertAlmostEqual(expected.t_frame, frame_time(final), places=12)
        difference = l2_norm(final.f_hat - expected.omega)
        self.assertLess(difference / l2_norm(expected.omega), 1e-10)
        psi = biot_savart(final.f_hat, frame_time(final))
        self.assertLess(l2_norm(psi - expected.psi) / l2_norm(expected.psi), 1e-10)

    def test_remap_preserves_samples(self):
        """Test that the remap leaves the lab-frame vorticity unchanged"""
        config = self.config(nonlinear=False, nu=0.0, dt_max=self.grid.eta_spacing)
        state = step(initial_state(config), self.grid.eta_spacing, config)
        before = lab_samples(state)
        after = remap_shear(state, dealias=False)
        self.assertEqual(after.remap_count, 1)
        self.assertAlmostEqual(frame_time(after), 0.0, places=12)
        np.testing.assert_allclose(lab_samples(after), before, atol=1e-15)

    def test_remap_waits_for_full_period(self):
        """Test that a state short of one period is not remapped"""
        config = self.config(nonlinear=False, dt_max=0.1)
        state = step(initial_state(config), 0.1, config)
        self.assertIs(remap_shear(state), state)
        with self.assertRaises(ValueError):
            lab_field(state)

    def test_snapshots_and_recorder(self):
        """Test that the recorder sees every step and snapshots hold the first and last state"""
        config = self.config(nonlinear=False, t_max=0.5, diagnostics_stride=3)
        recorder = MagicMock()
        trajectory = run(config, recorder)
        self.assertEqual(recorder.observe.call_count, trajectory.steps + 1)
        # steps 0, 3, 6, 9 and the final step 10
        self.assertEqual(trajectory.steps, 10)
        self.assertEqual(recorder.record.call_count, 5)
        self.assertEqual(len(trajectory.records), 5)
        self.assertEqual([s.t for s in trajectory.snapshots][0], 0.0)
        self.assertEqual(len(trajectory.snapshots), 2)
        self.assertIs(trajectory.snapshots[-1], trajectory.final)


class TestTimeStep(SolverTestCase):
    """Test cases for step size selection"""

    def test_lands_on_remap_time(self):
        """Test that dt is shortened to reach the next remap time"""
        config = self.config(nonlinear=False, dt_max=0.1)
        state = initial_state(config)._replace(t=0.2)
        self.assertAlmostEqual(choose_dt(state, config), 0.05)

    def test_lands_on_t_max(self):
        """Test that dt is shortened to reach t_max"""
        config = self.config(nonlinear=False, dt_max=0.1, remap_enabled=False, t_max=1.0)
        state = initial_state(config)._replace(t=0.97)
        self.assertAlmostEqual(choose_dt(state, config), 0.03)

    def test_cfl_violation(self):
        """Test that a step beyond dt_max is refused"""
        config = self.config()
        with self.assertRaises(CFLViolationError):
            step(initial_state(config), 1.0, config)


class TestNonlinearRun(SolverTestCase):
    """Test cases for runs with the nonlinearity"""

    def test_nonlinear_term(self):
        """Test that the nonlinear term is real, mean-free and dealiased"""
        field = initial_field(self.config(epsilon=1.0))
        forcing = nonlinear_rhs(field, 0.0)
        self.assertTrue(forcing.is_hermitian(tol=1e-10))
        self.assertEqual(forcing.coeffs[0, 0], 0.0)
        self.assertFalse(np.any(forcing.coeffs[~dealias_mask(self.grid)]))
        self.assertGreater(l2_norm(forcing), 0.0)

    def test_inviscid_invariants(self):
        """Test conservation of enstrophy and circulation at nu = 0"""
        config = self.config(nu=0.0, t_max=0.5)
        start = initial_state(config)
        final = run(config).final
        self.assertEqual(circulation(final), 0.0)
        self.assertEqual(circulation(start), 0.0)
        self.assertLess(abs(enstrophy(final) - enstrophy(start)) / enstrophy(start), 1e-8)

    def test_viscosity_dissipates(self):
        """Test that enstrophy decreases with nu > 0"""
        config = self.config(t_max=0.5)
        self.assertLess(enstrophy(run(config).final), enstrophy(initial_state(config)))

    def test_zero_epsilon(self):
        """Test that epsilon = 0 gives the zero trajectory"""
        final = run(self.config(epsilon=0.0, t_max=0.3)).final
        self.assertFalse(np.any(final.f_hat.coeffs))

    def test_seam_warning(self):
        """Test that a packet spread over the box raises a seam warning"""
        config = self.config(initial_data=InitialData('gaussian', width=4.0), t_max=0.1, nonlinear=False)
        with self.assertLogs('shearflow.solver', 'WARNING'):
            final = run(config).final
        self.assertGreaterEqual(final.warnings['seam'], 1)


def direct_convolution(field, t):
    """-(U . grad) f summed over all interacting pairs of modes, without any transform"""
    grid = field.grid
    K, XI = grid.mesh()
    eta = XI - K * t
    psi = field.coeffs * stream_symbol(K, eta)
    u_z, u_y = -1j * eta * psi, 1j * K * psi
    f_z, f_y = 1j * K * field.coeffs, 1j * eta * field.coeffs
    result = np.zeros(grid.shape, dtype=complex)
    occupied = list(zip(*np.nonzero(field.coeffs)))
    for p in occupied:
        for q in occupied:
            target = ((p[0] + q[0]) % grid.n_z, (p[1] + q[1]) % grid.n_v)
            result[target] -= (u_z[p] * f_z[q] + u_y[p] * f_y[q]) / (2.0 * grid.half_width)
    result *= dealias_mask(grid) & nyquist_mask(grid)
    result[0, 0] = 0.0
    return result


class TestNonlinearTerm(SolverTestCase):
    """Test cases for the transport term and the frame velocity"""

    def test_matches_direct_convolution(self):
        """Test the pseudo-spectral product against the pair sum on an 8 x 8 grid"""
        grid = make_grid(8, 8, math.pi)
        K, XI = grid.mesh()
        samples = np.random.default_rng(5).standard_normal(grid.shape)
        field = SpectralField.from_physical(grid, samples)
        # |k|, |j| <= 1 keeps every product on the lattice without wrapping
        field = field.with_coeffs(field.coeffs * ((np.abs(K) <= 1) & (np.abs(XI) <= grid.eta_spacing)))
        expected = direct_convolution(field, 0.3)
        scale = np.max(np.abs(expected))
        self.assertGreater(scale, 0.0)
        np.testing.assert_allclose(nonlinear_rhs(field, 0.3).coeffs, expected, rtol=0.0, atol=1e-12 * scale)

    def test_velocity_is_divergence_free(self):
        """Test ik u_z + i(eta - k t) u_y = 0 mode by mode"""
        field = initial_field(self.config(epsilon=1.0))
        t = 0.37
        u_z, u_y = velocity(field, t)
        K, XI = self.grid.mesh()
        divergence = 1j * K * u_z.coeffs + 1j * (XI - K * t) * u_y.coeffs
        scale = float(np.max(np.abs(K * u_z.coeffs)))
        self.assertGreater(scale, 0.0)
        self.assertLess(float(np.max(np.abs(divergence))), 1e-14 * scale)

    def test_shear_profile_is_steady(self):
        """Test that a field depending on y alone has no transport"""
        field = initial_field(self.config(initial_data=InitialData('gaussian', wavenumbers=(0,)), epsilon=1.0))
        self.assertGreater(l2_norm(field), 0.0)
        self.assertFalse(np.any(nonlinear_rhs(field, 0.4).coeffs))

    def test_single_wave_is_steady(self):
        """Test that one Fourier mode and its partner do not interact"""
        field = initial_field(self.config(initial_data=InitialData('modes', modes=((1, 5, 1.0),)), epsilon=1.0))
        self.assertLess(float(np.max(np.abs(nonlinear_rhs(field, 0.4).coeffs))), 1e-12)


class TestIntegrator(SolverTestCase):
    """Test cases for the accuracy of the time stepping"""

    def test_fourth_order(self):
        """Test that halving dt divides the difference between runs by about 16"""
        start = initial_state(self.config(nu=1e-3, epsilon=2.0))

        def advance(dt):
            state = start
            for _ in range(int(round(0.2 / dt))):
                state = step(state, dt)
            return state.f_hat

        coarse, middle, fine = (advance(dt) for dt in (0.1, 0.05, 0.025))
        ratio = l2_norm(coarse - middle) / l2_norm(middle - fine)
        self.assertTrue(12.0 < ratio < 20.0, ratio)

    def test_norm_never_grows(self):
        """Test that the L2 norm is nonincreasing at every step when nu > 0"""
        norms = [l2_norm(state.f_hat) for _, state, _ in iterate(self.config(t_max=1.0))]
        self.assertGreater(len(norms), 20)
        for before, after in zip(norms, norms[1:]):
            self.assertLessEqual(after, before)

    def test_remap_drops_modes_outside_dealiasing(self):
        """Test that a dealiased remap zeroes, counts and accounts for modes beyond the 2/3 region"""
        coeffs = np.zeros(self.grid.shape, dtype=complex)
        # initial_field would already drop j = 50
        for j in (50, 3):
            coeffs[1, j] = coeffs[-1, -j] = 1.0
        state = initial_state(self.config(nonlinear=False))
        state = state._replace(t=self.grid.eta_spacing, f_hat=state.f_hat.with_coeffs(coeffs))
        kept = remap_shear(state, dealias=False)
        self.assertEqual(kept.f_hat.coeffs[1, 49], 1.0)
        self.assertNotIn('sheared_out', kept.warnings)
        dropped = remap_shear(state)
        self.assertEqual(dropped.f_hat.coeffs[1, 49], 0.0)
        self.assertEqual(dropped.f_hat.coeffs[-1, -49], 0.0)
        self.assertEqual(dropped.f_hat.coeffs[1, 2], 1.0)
        self.assertEqual(dropped.warnings['sheared_out'], 2)
        self.assertAlmostEqual(dropped.remap_loss, 2.0 * self.grid.eta_spacing)
