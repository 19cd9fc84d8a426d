"""
Two-step Markov normalization of a kernel matrix.

All kernel sums carry the empirical weight 1/N_emb:

    rho(i)   = (1/N) sum_j k(i, j)
    sigma(i) = (1/N) sum_j k(i, j) / rho(j)
    p(i, j)  = k(i, j) / (sigma(i) rho(j))          row-stochastic
    p^(i, j) = k(i, j) / (s(i) s(j)),  s = sqrt(sigma rho)   symmetric

and p = D^{-1/2} p^ D^{1/2} with D = diag(sigma / rho).
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse
from scipy.sparse.csgraph import connected_components

from . import storage
from .delay_kernel import KernelBundle
from .exceptions import NormalizationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MarkovBundle:
    rho: np.ndarray
    sigma: np.ndarray
    sigma_hat: np.ndarray
    p_hat: np.ndarray | scipy.sparse.csr_matrix
    d_scale: np.ndarray
    epsilon: float = 0.0
    q: int = 0

    def __post_init__(self):
        for name in ('rho', 'sigma', 'sigma_hat', 'd_scale'):
            getattr(self, name).setflags(write=False)
        if isinstance(self.p_hat, np.ndarray):
            self.p_hat.setflags(write=False)

    @property
    def n_emb(self):
        return self.rho.shape[0]

    @property
    def is_sparse(self):
        return scipy.sparse.issparse(self.p_hat)

    def operator(self):
        """The symmetric weighted operator (1/N) p^."""
        return self.p_hat / self.n_emb

    def markov_matrix(self):
        """Dense row-stochastic p(i, j); for small instances and checks."""
        root = np.sqrt(self.d_scale)
        p_hat = self.p_hat.toarray() if self.is_sparse else self.p_hat
        return p_hat * np.outer(1.0 / root, root)

    def stochastic_residual(self):
        """max_i |(1/N) sum_j p(i, j) - 1|."""
        row_mass = apply_markov(self, np.ones(self.n_emb))
        return float(np.max(np.abs(row_mass - 1.0)))

    def save(self, path):
        """Dense operators use the binary matrix cache, sparse ones an npz archive."""
        if self.is_sparse:
            return storage.save_sparse_cache(
                path, self.p_hat, q=self.q, epsilon=self.epsilon, rho=self.rho, sigma=self.sigma,
            )
        return storage.write_matrix_cache(
            path, 'markov', self.p_hat, q=self.q, epsilon=self.epsilon,
            vectors=(self.rho, self.sigma),
        )

    @classmethod
    def load(cls, path):
        if storage.is_sparse_cache(path):
            meta, vectors, p_hat = storage.load_sparse_cache(path)
            rho, sigma = vectors['rho'], vectors['sigma']
        else:
            meta, (rho, sigma), p_hat = storage.read_matrix_cache(path)
        sigma_hat = np.sqrt(sigma * rho)
        return cls(
            rho=rho, sigma=sigma, sigma_hat=sigma_hat, p_hat=p_hat,
            d_scale=sigma / rho, epsilon=meta['epsilon'], q=meta['q'],
        )


def _check_connected(kernel):
    n_components, _ = connected_components(kernel, directed=False)
    if n_components > 1:
        raise NormalizationError(
            f"sparse kernel pattern splits into {n_components} components; "
            "the Markov operator would not be ergodic (increase k_nn)"
        )


def normalize(bundle):
    """Build rho, sigma, sigma_hat and the symmetric kernel p^ from a KernelBundle."""
    kernel = bundle.kernel
    n_emb = bundle.n_emb
    sparse = bundle.is_sparse
    if sparse:
        if kernel.nnz and kernel.data.min() < 0:
            raise NormalizationError('kernel entries must be nonnegative')
        _check_connected(kernel)
    elif np.min(kernel) < 0:
        raise NormalizationError('kernel entries must be nonnegative')

    rho = np.asarray(kernel.sum(axis=1)).ravel() / n_emb
    if np.any(rho <= 0):
        row = int(np.flatnonzero(rho <= 0)[0])
        raise NormalizationError(f"kernel row {row} has zero mass")
    sigma = np.asarray(kernel @ (1.0 / rho)).ravel() / n_emb
    sigma_hat = np.sqrt(sigma * rho)

    if sparse:
        scale = scipy.sparse.diags(1.0 / sigma_hat)
        p_hat = (scale @ kernel @ scale).tocsr()
        p_hat = ((p_hat + p_hat.T) * 0.5).tocsr()
    else:
        p_hat = kernel / np.outer(sigma_hat, sigma_hat)

    markov = MarkovBundle(
        rho=rho,
        sigma=sigma,
        sigma_hat=sigma_hat,
        p_hat=p_hat,
        d_scale=sigma / rho,
        epsilon=bundle.epsilon,
        q=bundle.q,
    )
    logger.debug("normalized kernel: N_emb=%d, residual=%.2e", n_emb, markov.stochastic_residual())
    return markov


def apply_markov(markov, f):
    """P f = D^{-1/2} (p^ (D^{1/2} f)) / N; preserves constants."""
    f = np.asarray(f, dtype=float)
    root = np.sqrt(markov.d_scale)
    if f.ndim == 2:
        root = root[:, np.newaxis]
    return (markov.p_hat @ (root * f)) / (root * markov.n_emb)


def from_kernel_matrix(kernel, epsilon=1.0, q=1):
    """Normalize a raw kernel matrix (dense array or sparse)."""
    if not scipy.sparse.issparse(kernel):
        kernel = np.array(kernel, dtype=float)
    else:
        kernel = scipy.sparse.csr_matrix(kernel, dtype=float)
    return normalize(KernelBundle(kernel=kernel, epsilon=epsilon, q=q))
