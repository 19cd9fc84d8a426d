"""
Small datasets with closed-form spectra shared by the test modules.
"""
import numpy as np

from spectral.choices import SystemKind
from spectral.dynamics import SystemSpec, integrate_trajectory
from spectral.delay_kernel import delay_distance_matrix, gaussian_kernel
from spectral.markov import normalize

CIRCLE_SAMPLES = 400


def circle_trajectory(n=CIRCLE_SAMPLES, phase=0.0):
    """Exactly one period of the unit-frequency rotation observed as (sin, cos)."""
    spec = SystemSpec(kind=SystemKind.CIRCLE_ROTATION)
    return integrate_trajectory(spec, np.array([phase]), 2.0 * np.pi / n, n)


def circle_markov(n=CIRCLE_SAMPLES, q=1, epsilon=1.0):
    trajectory = circle_trajectory(n)
    kernel = gaussian_kernel(delay_distance_matrix(trajectory, q), epsilon)
    return trajectory, normalize(kernel)


def random_samples(n, dim=2, seed=0):
    return np.random.default_rng(seed).normal(size=(n, dim))
