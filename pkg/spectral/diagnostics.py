"""
Empirical checks on kernels, spectra and Galerkin solutions.
"""
import logging

import numpy as np

from .delay_kernel import delay_distance_matrix, gaussian_kernel, tune_bandwidth

logger = logging.getLogger(__name__)


def commutator_norm(kernel):
    """
    max |U K - K U| for the index shift U f(n) = f(n + 1), restricted to the
    interior: entries K(i+1, j+1) - K(i, j).
    """
    kernel = getattr(kernel, 'kernel', kernel)
    if hasattr(kernel, 'toarray'):
        kernel = kernel.toarray()
    return float(np.max(np.abs(kernel[1:, 1:] - kernel[:-1, :-1])))


def offdiagonal_dispersion(distances, min_separation=None):
    """Coefficient of variation of d_Q^2(i, j) over pairs with |i - j| > min_separation."""
    if min_separation is None:
        min_separation = distances.q
    entries = distances.entries
    n_emb = distances.n_emb
    total = total_sq = count = 0.0
    for offset in range(min_separation + 1, n_emb):
        values = np.diagonal(entries, offset)
        total += values.sum()
        total_sq += np.dot(values, values)
        count += values.size
    if count == 0:
        return float('nan')
    mean = total / count
    variance = max(total_sq / count - mean ** 2, 0.0)
    return float(np.sqrt(variance) / mean) if mean > 0 else float('nan')


def delay_sweep(trajectory, qs, epsilon=None, *, min_separation=None):
    """
    Commutator norm and off-diagonal dispersion for each Q. A fixed
    ``epsilon`` is used for every Q; None tunes it per Q.
    """
    rows = []
    for q in qs:
        distances = delay_distance_matrix(trajectory, q)
        eps = epsilon if epsilon is not None else tune_bandwidth(distances)[0]
        kernel = gaussian_kernel(distances, eps)
        rows.append({
            'Q': q,
            'epsilon': eps,
            'commutator': commutator_norm(kernel),
            'dispersion': offdiagonal_dispersion(
                distances, q if min_separation is None else min_separation,
            ),
        })
        logger.info("delay sweep Q=%d: %s", q, rows[-1])
    return rows


def pair_gaps(lambdas, pairs=5):
    """|lambda_{2k-1} - lambda_{2k}| / lambda_{2k-1} for k = 1..pairs."""
    lambdas = np.asarray(lambdas, dtype=float)
    pairs = min(pairs, (lambdas.size - 1) // 2)
    first = lambdas[1:2 * pairs:2]
    second = lambdas[2:2 * pairs + 1:2]
    return np.abs(first - second) / first


def skew_residual(V_mat):
    """||V + V^T||_F / ||V||_F."""
    V_mat = np.asarray(V_mat)
    norm = np.linalg.norm(V_mat)
    return float(np.linalg.norm(V_mat + V_mat.T) / norm) if norm > 0 else 0.0


def dirichlet_residuals(solution, count=None):
    """|Re gamma_j + theta E_j| / (theta E_j) for the leading solutions."""
    count = solution.m if count is None else min(count, solution.m)
    scale = solution.theta * solution.energies[:count]
    with np.errstate(divide='ignore', invalid='ignore'):
        return solution.residuals[:count] / scale


def dominant_frequency(series, dt):
    """Frequency (cycles per time unit) and bin of the largest FFT peak."""
    series = np.asarray(series, dtype=float)
    spectrum = np.abs(np.fft.rfft(series - series.mean()))
    spectrum[0] = 0.0
    peak = int(np.argmax(spectrum))
    return peak / (series.size * dt), peak


def phase_lag(first, second, period):
    """
    Lag (samples) maximizing the cross-correlation sum_n first(n) second(n + l)
    over one period, folded into [0, period / 2].
    """
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    n = first.size
    period = int(round(period))
    lags = np.arange(min(period, n - 1))
    correlation = np.array([np.dot(first[:n - lag], second[lag:]) / (n - lag) for lag in lags])
    lag = int(lags[np.argmax(correlation)])
    return min(lag, period - lag)
