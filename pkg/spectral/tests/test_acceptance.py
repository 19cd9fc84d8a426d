"""
Desk-scale end-to-end checks (N=8000, dt=0.01, Q=400, m=50, theta=1e-4).

These take minutes and are skipped unless KOOPMAN_ACCEPTANCE=1.
"""
import os
from unittest import skipUnless

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from spectral import diagnostics
from spectral.choices import CouplingMap, FDOrder, SystemKind
from spectral.delay_kernel import delay_distance_matrix, gaussian_kernel, sparsify_knn, tune_bandwidth
from spectral.dynamics import SystemSpec, initial_state, integrate_trajectory
from spectral.galerkin import FDScheme, generator_matrix, solve_generator
from spectral.markov import normalize
from spectral.spectrum import eigendecompose

ACCEPTANCE = os.environ.get('KOOPMAN_ACCEPTANCE') == '1'

N = 8000
DT = 0.01
Q = 400
M = 50
THETA = 1e-4


def desk_trajectory(kind, coupling=None, n=N):
    koopman = settings.KOOPMAN
    spec = SystemSpec(kind=kind, coupling=coupling)
    spinup = koopman['SPINUP_L63'] if kind in (SystemKind.L63_PRODUCT, SystemKind.L63_PURE) else 0.0
    return integrate_trajectory(
        spec, initial_state(spec, 0), DT, n, spinup, max_substep=koopman['MAX_SUBSTEP'],
    )


def desk_markov(trajectory, q, epsilon=None):
    koopman = settings.KOOPMAN
    distances = delay_distance_matrix(trajectory, q)
    if epsilon is None:
        epsilon, _ = tune_bandwidth(
            distances, n_points=koopman['TUNE_GRID_POINTS'], sample_size=koopman['TUNE_SAMPLE'],
        )
    return normalize(gaussian_kernel(distances, epsilon))


def integer_distance(frequencies):
    return np.abs(frequencies - np.round(frequencies))


@skipUnless(ACCEPTANCE, 'set KOOPMAN_ACCEPTANCE=1 to run desk-scale checks')
class TorusProductAcceptanceTests(SimpleTestCase):
    """Fayad torus times a unit-frequency rotation, additive observation."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.trajectory = desk_trajectory(SystemKind.FAYAD_TORUS_PRODUCT)
        cls.markov = desk_markov(cls.trajectory, Q)
        cls.spectrum = eigendecompose(cls.markov, M)
        cls.scheme = FDScheme(FDOrder.FIRST_FORWARD, DT)
        cls.solution = solve_generator(cls.spectrum, cls.scheme, M, THETA)

    def test_integer_eigenfrequencies(self):
        frequencies = self.solution.frequencies[:10]
        self.assertTrue(np.all(np.abs(frequencies) > 0.5), frequencies)
        self.assertLess(integer_distance(frequencies).max(), 0.05, frequencies)

    def test_eigenvalues_come_in_pairs(self):
        gaps = diagnostics.pair_gaps(self.spectrum.lambdas, 5)
        self.assertLess(gaps.max(), 0.05, gaps)

    def test_generator_matrix_is_nearly_skew(self):
        self.assertLess(diagnostics.skew_residual(self.solution.V_mat), 0.1)

    def test_markov_operator_is_row_stochastic(self):
        self.assertLess(self.markov.stochastic_residual(), 1e-12)

    def test_dirichlet_energy_tracks_real_part(self):
        solution = solve_generator(self.spectrum, self.scheme, M, THETA, antisymmetrize=True)
        residuals = diagnostics.dirichlet_residuals(solution, 6)
        self.assertLess(residuals.max(), 0.1, residuals)

    def test_paired_eigenfunctions_are_quarter_period_apart(self):
        phis = self.spectrum.phis
        frequency, peak = diagnostics.dominant_frequency(phis[:, 1], DT)
        self.assertGreater(peak, 0)
        period = 1.0 / (frequency * DT)
        lag = diagnostics.phase_lag(phis[:, 1], phis[:, 2], period)
        self.assertLessEqual(abs(lag - round(period) / 4.0), 1.0)

    def test_short_delays_cluster_near_one(self):
        short = eigendecompose(desk_markov(self.trajectory, 1), 10)
        self.assertGreater(short.lambdas[10], self.spectrum.lambdas[10])
        self.assertTrue(np.all(short.lambdas[1:11] > 0.9), short.lambdas[1:11])

    def test_commutator_decays_with_delays(self):
        rows = diagnostics.delay_sweep(self.trajectory, [10, 250], epsilon=self.markov.epsilon)
        self.assertLess(rows[1]['commutator'] / rows[0]['commutator'], 0.2)

    def test_both_difference_schemes_agree(self):
        central = solve_generator(self.spectrum, FDScheme(FDOrder.SECOND_CENTRAL, DT), M, THETA)
        np.testing.assert_allclose(
            np.sort(central.frequencies[:10]), np.sort(self.solution.frequencies[:10]), atol=0.05,
        )
        self.assertEqual(generator_matrix(self.spectrum, self.scheme, 4).shape, (4, 4))

    def test_frequencies_stable_when_basis_grows(self):
        larger = eigendecompose(self.markov, M + 10)
        grown = solve_generator(larger, self.scheme, M + 10, THETA)
        np.testing.assert_allclose(
            np.sort(grown.frequencies[:10]), np.sort(self.solution.frequencies[:10]), atol=0.02,
        )

    def test_doubling_theta_doubles_decay(self):
        single = solve_generator(self.spectrum, self.scheme, M, THETA, antisymmetrize=True)
        double = solve_generator(self.spectrum, self.scheme, M, 2 * THETA, antisymmetrize=True)
        ratios = double.gammas.real[:6] / single.gammas.real[:6]
        np.testing.assert_allclose(ratios, 2.0, rtol=0.1)

    def test_real_parts_stay_below_slack(self):
        self.assertLessEqual(self.solution.gammas.real.max(), 1e-3)

    def test_nearest_neighbour_kernel_keeps_leading_spectrum(self):
        trajectory = desk_trajectory(SystemKind.FAYAD_TORUS_PRODUCT, n=2000)
        distances = delay_distance_matrix(trajectory, 100)
        epsilon, _ = tune_bandwidth(distances)
        kernel = gaussian_kernel(distances, epsilon)
        dense = eigendecompose(normalize(kernel), 10).lambdas
        sparse = eigendecompose(normalize(sparsify_knn(kernel, 64)), 10).lambdas
        np.testing.assert_allclose(sparse, dense, atol=1e-3)


@skipUnless(ACCEPTANCE, 'set KOOPMAN_ACCEPTANCE=1 to run desk-scale checks')
class LorenzAcceptanceTests(SimpleTestCase):

    def test_product_system_has_integer_eigenfrequencies(self):
        trajectory = desk_trajectory(SystemKind.L63_PRODUCT)
        spectrum = eigendecompose(desk_markov(trajectory, Q), M)
        solution = solve_generator(spectrum, FDScheme(FDOrder.FIRST_FORWARD, DT), M, THETA)
        frequencies = solution.frequencies[:10]
        self.assertLess(integer_distance(frequencies).max(), 0.1, frequencies)

    def test_mixing_system_spectrum_collapses(self):
        trajectory = desk_trajectory(SystemKind.L63_PURE, CouplingMap.IDENTITY)
        lambdas = eigendecompose(desk_markov(trajectory, Q), 10).lambdas[1:11]
        self.assertLess(lambdas.max(), 0.5, lambdas)
        self.assertLess(np.ptp(lambdas), 0.15, lambdas)

    def test_mixing_system_dispersion_shrinks_with_delays(self):
        trajectory = desk_trajectory(SystemKind.L63_PURE, CouplingMap.IDENTITY)
        rows = diagnostics.delay_sweep(trajectory, [1, Q], epsilon=1.0)
        self.assertLess(rows[1]['dispersion'] / rows[0]['dispersion'], 1.0, rows)
