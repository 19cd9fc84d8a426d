"""
Eigendecomposition of the symmetric Markov operator and Nystrom extension.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from . import storage
from .exceptions import SpectrumError

logger = logging.getLogger(__name__)

NYSTROM_TOL = 1e-10
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class MarkovSpectrum:
    """
    Leading eigenpairs, descending. ``vhats`` are eigenvectors of the symmetric
    operator normalized so that (1/N) sum_n v_i v_j = delta_ij; ``phis`` are
    the row-stochastic eigenfunctions D^{-1/2} v, orthonormal under the
    sigma/rho weighted product.
    """
    lambdas: np.ndarray
    phis: np.ndarray
    vhats: np.ndarray
    etas: np.ndarray
    d_scale: np.ndarray
    residuals: np.ndarray

    def __post_init__(self):
        for name in ('lambdas', 'phis', 'vhats', 'etas', 'd_scale', 'residuals'):
            getattr(self, name).setflags(write=False)

    @property
    def m(self):
        return self.lambdas.shape[0] - 1

    @property
    def n_emb(self):
        return self.phis.shape[0]

    def inner(self, f, g):
        """<f, g> = (1/N) sum_n f(n) sigma~(n) g(n)."""
        return float(np.sum(f * self.d_scale * g) / self.n_emb)

    def gram(self):
        weighted = self.phis * self.d_scale[:, np.newaxis]
        return self.phis.T @ weighted / self.n_emb

    def save(self, path):
        return storage.save_arrays(
            path,
            lambdas=self.lambdas, phis=self.phis, vhats=self.vhats,
            etas=self.etas, d_scale=self.d_scale, residuals=self.residuals,
        )

    @classmethod
    def load(cls, path):
        return cls(**storage.load_arrays(path))


def sobolev_weights(lambdas, tol=NYSTROM_TOL):
    """
    eta_j = (1/lambda_j - 1) / (1/lambda_1 - 1), eta_0 = 0, eta_1 = 1;
    eigenvalues at or below ``tol`` get eta = inf.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    etas = np.full(lambdas.shape, np.inf)
    etas[0] = 0.0
    if lambdas.size > 1:
        etas[1] = 1.0
    if lambdas.size > 2 and lambdas[1] > tol:
        gap = 1.0 / lambdas[1] - 1.0
        positive = lambdas[2:] > tol
        etas[2:][positive] = (1.0 / lambdas[2:][positive] - 1.0) / gap
        etas[1:] = np.maximum.accumulate(etas[1:])
    return etas


def _fix_signs(vectors):
    for j in range(vectors.shape[1]):
        pivot = int(np.argmax(np.abs(vectors[:, j])))
        if vectors[pivot, j] < 0:
            vectors[:, j] = -vectors[:, j]
    return vectors


def _solve(operator, k, *, dense, tol, v0):
    n = operator.shape[0]
    if dense:
        matrix = operator.toarray() if scipy.sparse.issparse(operator) else operator
        return scipy.linalg.eigh(matrix, subset_by_index=[n - k, n - 1])
    try:
        return scipy.sparse.linalg.eigsh(operator, k=k, which='LA', tol=tol, v0=v0)
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        converged = exc.eigenvalues.size
        raise SpectrumError(
            f"Lanczos solver did not converge: {converged} of {k} eigenpairs "
            f"reached residual tolerance {tol:g}"
        ) from exc


def eigendecompose(markov, m, *, dense_limit=4096, tol=1e-10):
    """
    Top m + 1 eigenpairs of the symmetric weighted operator, sorted descending.

    A dense solver is used up to ``dense_limit`` samples (sparse operators
    are densified), a Lanczos partial solver above that.
    """
    n_emb = markov.n_emb
    if not 1 <= m < n_emb:
        raise SpectrumError(f"m={m} outside [1, {n_emb - 1}]")
    operator = markov.operator()
    dense = n_emb <= dense_limit
    lambdas, vectors = _solve(
        operator, m + 1, dense=dense, tol=tol, v0=np.linspace(1.0, 2.0, n_emb),
    )
    order = np.argsort(-lambdas, kind='stable')
    lambdas = np.array(lambdas[order])
    vectors = _fix_signs(np.array(vectors[:, order]))

    residuals = np.linalg.norm(operator @ vectors - vectors * lambdas, axis=0)
    residuals = residuals / np.linalg.norm(vectors, axis=0)
    if np.max(residuals) > RESIDUAL_TOL:
        raise SpectrumError(
            "eigensolver residuals above tolerance: "
            + ', '.join(f"j={j}: {r:.2e}" for j, r in enumerate(residuals) if r > RESIDUAL_TOL)
        )
    if abs(lambdas[0] - 1.0) > 1e-10:
        raise SpectrumError(f"leading eigenvalue {lambdas[0]!r} differs from 1")
    if lambdas[1] >= 1.0 - 1e-10:
        raise SpectrumError(
            "eigenvalue 1 is degenerate; the kernel graph is disconnected"
        )

    vhats = vectors * np.sqrt(n_emb)
    phis = vhats / np.sqrt(markov.d_scale)[:, np.newaxis]
    logger.info(
        "eigendecomposition (%s): lambda_1=%.6f lambda_%d=%.6f",
        'dense' if dense else 'lanczos', lambdas[1], m, lambdas[m],
    )
    return MarkovSpectrum(
        lambdas=lambdas,
        phis=phis,
        vhats=vhats,
        etas=sobolev_weights(lambdas),
        d_scale=np.array(markov.d_scale),
        residuals=residuals,
    )


def nystrom_extend(markov, spectrum, new_kernel_rows, indices=None):
    """
    phi_j(x) = lambda_j^{-1} (1/N) sum_n p(x, x_n) phi_j(n), where the rows
    hold k(x, x_n) for the new points and p uses the training rho.
    """
    rows = np.atleast_2d(np.asarray(new_kernel_rows, dtype=float))
    if indices is None:
        indices = np.arange(spectrum.m + 1)
    indices = np.atleast_1d(indices)
    lambdas = spectrum.lambdas[indices]
    if np.any(lambdas <= NYSTROM_TOL):
        bad = indices[lambdas <= NYSTROM_TOL]
        raise SpectrumError(f"cannot extend eigenfunctions with eigenvalue <= {NYSTROM_TOL:g}: {bad}")
    n_emb = markov.n_emb
    sigma_new = rows @ (1.0 / markov.rho) / n_emb
    markov_rows = rows / (sigma_new[:, np.newaxis] * markov.rho[np.newaxis, :])
    return markov_rows @ spectrum.phis[:, indices] / (n_emb * lambdas)


def write_eigenvalue_table(spectrum, path):
    rows = zip(range(spectrum.m + 1), spectrum.lambdas, spectrum.etas)
    return storage.write_csv(path, rows, header=['j', 'lambda', 'eta'])


def write_eigenfunction_table(spectrum, path, dt):
    m = spectrum.m
    index = np.arange(spectrum.n_emb)
    table = np.column_stack([index, index * dt, spectrum.phis[:, 1:]])
    header = ['n', 't'] + [f"phi_{j}" for j in range(1, m + 1)]
    rows = ([int(row[0])] + list(row[1:]) for row in table)
    return storage.write_csv(path, rows, header=header)
