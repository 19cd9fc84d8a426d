"""
Delay-coordinate pseudodistances and Gaussian kernels.

Embedded samples use forward delays: window n covers observations
n, ..., n + Q - 1, so there are N_emb = N - Q + 1 of them.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
from scipy.spatial.distance import cdist

from . import storage
from .exceptions import KernelError

logger = logging.getLogger(__name__)


def gaussian_shape(u):
    return np.exp(-u)


@dataclass(frozen=True)
class DelayDistanceMatrix:
    """Squared pseudodistances d_Q^2 between embedded samples."""
    q: int
    entries: np.ndarray

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def n_emb(self):
        return self.entries.shape[0]

    def save(self, path):
        return storage.write_matrix_cache(path, 'distance', self.entries, q=self.q)

    @classmethod
    def load(cls, path):
        meta, _, matrix = storage.read_matrix_cache(path)
        return cls(q=meta['q'], entries=matrix)


@dataclass(frozen=True)
class KernelBundle:
    kernel: np.ndarray | scipy.sparse.csr_matrix
    epsilon: float
    q: int
    k_nn: int | None = None

    def __post_init__(self):
        if isinstance(self.kernel, np.ndarray):
            self.kernel.setflags(write=False)

    @property
    def n_emb(self):
        return self.kernel.shape[0]

    @property
    def is_sparse(self):
        return scipy.sparse.issparse(self.kernel)

    def dense(self):
        return self.kernel.toarray() if self.is_sparse else self.kernel

    def save(self, path):
        if self.is_sparse:
            raise KernelError('the binary matrix cache stores dense kernels only')
        return storage.write_matrix_cache(path, 'kernel', self.kernel, q=self.q, epsilon=self.epsilon)

    @classmethod
    def load(cls, path):
        meta, _, matrix = storage.read_matrix_cache(path)
        return cls(kernel=matrix, epsilon=meta['epsilon'], q=meta['q'])


@dataclass(frozen=True)
class BandwidthDiagnostics:
    epsilons: np.ndarray
    sums: np.ndarray
    slopes: np.ndarray
    flat: bool
    dimension: float = field(default=0.0)

    def rows(self):
        """(epsilon, S, slope) with the slope of the interval starting at epsilon."""
        slopes = np.append(self.slopes, np.nan)
        return list(zip(self.epsilons, self.sums, slopes))


def embedded_count(n_samples, q):
    if not 1 <= q <= n_samples - 1:
        raise KernelError(f"delay count Q={q} outside [1, {n_samples - 1}]")
    return n_samples - q + 1


def _samples(trajectory):
    return getattr(trajectory, 'samples', trajectory)


def _diagonal(samples, q, n_emb, offset):
    """Windowed sums along one diagonal via the sliding update."""
    n = samples.shape[0]
    pair = np.sum((samples[offset:] - samples[:n - offset]) ** 2, axis=1)
    first = pair[:q].sum()
    increments = pair[q:q + n_emb - offset - 1] - pair[:n_emb - offset - 1]
    windows = first + np.concatenate(([0.0], np.cumsum(increments)))
    return np.maximum(windows / q, 0.0)


def delay_distance_matrix(trajectory, q, *, workers=1):
    """
    d_Q^2(i, j) = (1/Q) sum_q |F_{i+q} - F_{j+q}|^2 by the along-diagonal recursion
    Q d_Q^2(i+1, j+1) = Q d_Q^2(i, j) - |F_i - F_j|^2 + |F_{i+Q} - F_{j+Q}|^2.

    Diagonals are independent, so ``workers`` threads fill disjoint entries.
    """
    samples = np.asarray(_samples(trajectory), dtype=float)
    n_emb = embedded_count(samples.shape[0], q)
    entries = np.zeros((n_emb, n_emb))

    def fill(offsets):
        for offset in offsets:
            values = _diagonal(samples, q, n_emb, offset)
            index = np.arange(n_emb - offset)
            entries[index, index + offset] = values
            entries[index + offset, index] = values

    offsets = range(1, n_emb)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, [offsets[w::workers] for w in range(workers)]))
    else:
        fill(offsets)
    logger.debug("delay distances: N_emb=%d Q=%d", n_emb, q)
    return DelayDistanceMatrix(q=q, entries=entries)


def cross_delay_distances(reference, queries, q):
    """
    Direct O(M N Q) sum of d_Q^2 between every embedded query window (rows)
    and every embedded reference window (columns).
    """
    reference = np.asarray(_samples(reference), dtype=float)
    queries = np.asarray(_samples(queries), dtype=float)
    n_emb = embedded_count(reference.shape[0], q)
    m_emb = embedded_count(queries.shape[0], q)
    total = np.zeros((m_emb, n_emb))
    for lag in range(q):
        total += cdist(queries[lag:lag + m_emb], reference[lag:lag + n_emb], 'sqeuclidean')
    return total / q


def direct_delay_distances(trajectory, q):
    return DelayDistanceMatrix(q=q, entries=cross_delay_distances(trajectory, trajectory, q))


def gaussian_kernel(distances, epsilon, *, shape=gaussian_shape):
    """k(i, j) = shape(d_Q^2(i, j) / epsilon); the default shape is exp(-u)."""
    if not epsilon > 0:
        raise KernelError(f"bandwidth must be positive, got {epsilon}")
    kernel = shape(distances.entries / epsilon)
    return KernelBundle(kernel=kernel, epsilon=float(epsilon), q=distances.q)


def cross_kernel_rows(reference, queries, q, epsilon, *, shape=gaussian_shape):
    """Kernel values between new embedded windows and the training windows."""
    if not epsilon > 0:
        raise KernelError(f"bandwidth must be positive, got {epsilon}")
    return shape(cross_delay_distances(reference, queries, q) / epsilon)


def default_grid(distances, n_points=64, *, values=None):
    """n_points log-spaced bandwidths spanning [1e-3, 1e3] x median(d_Q^2)."""
    if values is None:
        values = distances.entries[np.triu_indices(distances.n_emb, k=1)]
    scale = float(np.median(values)) if values.size else 0.0
    if not scale > 0:
        scale = 1.0
    return np.logspace(-3, 3, n_points) * scale


def tune_bandwidth(distances, grid=None, *, n_points=64, sample_size=None, seed=0):
    """
    Pick epsilon where the log-log slope of the kernel sum
    S(eps) = mean_ij exp(-d_Q^2(i, j) / eps) is largest.

    Returns (epsilon, BandwidthDiagnostics). With ``sample_size`` the mean is
    taken over that many entries drawn with a fixed seed.
    """
    values = distances.entries.ravel()
    if sample_size is not None and sample_size < values.size:
        rng = np.random.default_rng(seed)
        values = values[rng.choice(values.size, size=sample_size, replace=False)]
    if grid is None:
        grid = default_grid(distances, n_points, values=values[values > 0])
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid.size < 2:
        raise KernelError('bandwidth grid needs at least two points')
    if np.any(grid <= 0):
        raise KernelError('bandwidth grid must be positive')

    sums = np.array([np.mean(np.exp(-values / eps)) for eps in grid])
    log_sums = np.log(np.maximum(sums, np.finfo(float).tiny))
    slopes = np.diff(log_sums) / np.diff(np.log(grid))
    best = int(np.argmax(slopes))
    flat = bool(slopes[best] <= 1e-12)
    if flat:
        epsilon = float(grid[0])
        logger.warning("kernel sum is flat over the bandwidth grid; using eps=%g", epsilon)
    else:
        epsilon = float(np.sqrt(grid[best] * grid[best + 1]))
    diagnostics = BandwidthDiagnostics(
        epsilons=grid,
        sums=sums,
        slopes=slopes,
        flat=flat,
        dimension=float(2.0 * max(slopes[best], 0.0)),
    )
    logger.info("tuned bandwidth eps=%g (dimension estimate %.2f)", epsilon, diagnostics.dimension)
    return epsilon, diagnostics


def sparsify_knn(bundle, k_nn, *, chunk=1024):
    """
    Keep the diagonal and the k_nn largest off-diagonal entries of each row,
    then symmetrize by union of the row and column patterns.
    """
    kernel = bundle.dense()
    n_emb = kernel.shape[0]
    if not 1 <= k_nn < n_emb:
        raise KernelError(f"k_nn={k_nn} outside [1, {n_emb - 1}]")

    rows, cols = [np.arange(n_emb)], [np.arange(n_emb)]
    for start in range(0, n_emb, chunk):
        block = np.array(kernel[start:start + chunk], dtype=float)
        local = np.arange(block.shape[0])
        block[local, start + local] = -np.inf
        nearest = np.argpartition(-block, k_nn - 1, axis=1)[:, :k_nn]
        rows.append(np.repeat(start + local, k_nn))
        cols.append(nearest.ravel())
    rows, cols = np.concatenate(rows), np.concatenate(cols)

    pattern = scipy.sparse.csr_matrix(
        (np.ones(rows.size), (rows, cols)), shape=(n_emb, n_emb),
    )
    pattern = (pattern + pattern.T).tocoo()
    sparse = scipy.sparse.csr_matrix(
        (kernel[pattern.row, pattern.col], (pattern.row, pattern.col)), shape=(n_emb, n_emb),
    )
    sparse.sort_indices()
    logger.info("sparsified kernel: k_nn=%d, %d nonzeros", k_nn, sparse.nnz)
    return KernelBundle(kernel=sparse, epsilon=bundle.epsilon, q=bundle.q, k_nn=k_nn)
