"""
Finite-difference generator, regularized Galerkin problem and Dirichlet
energy ordering.

The Galerkin space is spanned by the nonconstant basis functions 1..m. With
phi^(2)_j = phi_j / eta_j the matrices are

    A_ij = V_ij / eta_j - theta delta_ij,    B_ij = delta_ij / eta_i,

and a solution z = sum_k c_k phi^(2)_k has coefficients a_k = c_k / eta_k
in the orthonormal basis.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from . import storage
from .choices import FDOrder
from .exceptions import GalerkinError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FDScheme:
    order: FDOrder = FDOrder.FIRST_FORWARD
    dt: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, 'order', FDOrder(self.order))
        if not self.dt > 0:
            raise GalerkinError(f"sampling interval must be positive, got {self.dt}")

    def boundary(self, n):
        """Indices whose stencil is incomplete (their derivative is set to 0)."""
        if self.order == FDOrder.FIRST_FORWARD:
            return np.array([n - 1])
        return np.array([0, n - 1])


class Eigenpair(NamedTuple):
    gamma: complex
    coeffs: np.ndarray


@dataclass(frozen=True)
class GeneratorSolution:
    """Solutions ordered by nondecreasing Dirichlet energy; coeffs are columns."""
    V_mat: np.ndarray
    theta: float
    A_mat: np.ndarray
    B_mat: np.ndarray
    gammas: np.ndarray
    coeffs: np.ndarray
    energies: np.ndarray
    residuals: np.ndarray
    etas: np.ndarray

    def __post_init__(self):
        for name in ('V_mat', 'A_mat', 'B_mat', 'gammas', 'coeffs', 'energies',
                     'residuals', 'etas'):
            getattr(self, name).setflags(write=False)

    @property
    def m(self):
        return self.gammas.shape[0]

    @property
    def frequencies(self):
        return self.gammas.imag

    def basis_coefficients(self):
        """Coefficients a_k = c_k / eta_k of each solution in the orthonormal basis."""
        return self.coeffs / self.etas[:, np.newaxis]

    def save(self, path):
        return storage.save_arrays(
            path,
            V_mat=self.V_mat, theta=np.array(self.theta), A_mat=self.A_mat,
            B_mat=self.B_mat, gammas=self.gammas, coeffs=self.coeffs,
            energies=self.energies, residuals=self.residuals, etas=self.etas,
        )

    @classmethod
    def load(cls, path):
        arrays = storage.load_arrays(path)
        arrays['theta'] = float(arrays['theta'])
        return cls(**arrays)


def fd_apply(f, scheme):
    """
    first_forward:  (f[n+1] - f[n]) / dt, last entry 0.
    second_central: (f[n+1] - f[n-1]) / (2 dt), first and last entries 0.

    ``f`` may hold one function per column.
    """
    f = np.asarray(f)
    n = f.shape[0]
    if n < 3:
        raise GalerkinError(f"finite differences need at least 3 samples, got {n}")
    derivative = np.zeros_like(f, dtype=np.result_type(f.dtype, float))
    if scheme.order == FDOrder.FIRST_FORWARD:
        derivative[:-1] = (f[1:] - f[:-1]) / scheme.dt
    else:
        derivative[1:-1] = (f[2:] - f[:-2]) / (2.0 * scheme.dt)
    return derivative


def generator_matrix(spectrum, scheme, m=None, *, antisymmetrize=False,
                     include_constant=False, trim=False):
    """
    V_ij = <phi_i, V_dt phi_j> in L^2 of the sampling measure, over the
    symmetric-picture basis. Indices 1..m, or 0..m with ``include_constant``,
    where index 0 is the unit constant function.
    ``trim`` drops samples with an incomplete stencil from the inner product.
    """
    if m is None:
        m = spectrum.m
    if not 1 <= m <= spectrum.m:
        raise GalerkinError(f"m={m} needs a basis of size {m + 1}, have {spectrum.m + 1}")
    basis = np.array(spectrum.vhats[:, :m + 1])
    basis[:, 0] = 1.0
    n = basis.shape[0]
    derivative = fd_apply(basis, scheme)
    weights = np.full(n, 1.0)
    if trim:
        weights[scheme.boundary(n)] = 0.0
    weights /= weights.sum()
    full = basis.T @ (derivative * weights[:, np.newaxis])
    V = full if include_constant else full[1:, 1:]
    if antisymmetrize:
        V = 0.5 * (V - V.T)
    return np.array(V)


def build_galerkin(V_mat, etas, theta):
    V_mat = np.asarray(V_mat)
    etas = np.asarray(etas, dtype=float)
    m = V_mat.shape[0]
    if V_mat.shape != (m, m) or etas.shape != (m,):
        raise GalerkinError(f"V is {V_mat.shape} but {etas.shape[0]} weights were given")
    if np.any(etas <= 0) or not np.all(np.isfinite(etas)):
        bad = np.flatnonzero((etas <= 0) | ~np.isfinite(etas)) + 1
        raise GalerkinError(f"Sobolev weights must be finite and positive; bad indices {bad}")
    if theta < 0:
        raise GalerkinError(f"diffusion strength must be nonnegative, got {theta}")
    if theta == 0:
        logger.warning("theta=0: the Galerkin problem is unregularized")
    A_mat = V_mat / etas[np.newaxis, :] - theta * np.eye(m)
    B_mat = np.diag(1.0 / etas)
    return A_mat, B_mat


def _normalize_phase(vector):
    vector = vector / np.linalg.norm(vector)
    pivot = vector[int(np.argmax(np.abs(vector)))]
    return vector * (np.conj(pivot) / abs(pivot))


def solve_regularized(A_mat, B_mat):
    """Solve A c = gamma B c through the standard problem B^{-1} A c = gamma c."""
    diagonal = np.diag(B_mat)
    if np.any(diagonal <= 0) or np.count_nonzero(B_mat - np.diag(diagonal)):
        raise GalerkinError('B must be diagonal with a positive diagonal')
    try:
        gammas, vectors = scipy.linalg.eig(A_mat / diagonal[:, np.newaxis])
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise GalerkinError(f"generalized eigensolve failed: {exc}") from exc
    return [
        Eigenpair(complex(gamma), _normalize_phase(vectors[:, j]))
        for j, gamma in enumerate(gammas)
    ]


def dirichlet_order(solutions, etas, theta, *, V_mat=None, A_mat=None, B_mat=None):
    """
    E_j = sum_k eta_k |a_jk|^2 / sum_k |a_jk|^2 with a_jk = c_jk / eta_k;
    solutions are sorted by ascending energy, and |Re gamma_j + theta E_j|
    is recorded as a residual.
    """
    if not solutions:
        raise GalerkinError('no Galerkin solutions to order')
    etas = np.asarray(etas, dtype=float)
    gammas = np.array([pair.gamma for pair in solutions], dtype=complex)
    coeffs = np.column_stack([pair.coeffs for pair in solutions]).astype(complex)
    weights = np.abs(coeffs / etas[:, np.newaxis]) ** 2
    energies = (etas @ weights) / weights.sum(axis=0)
    order = np.argsort(energies, kind='stable')
    gammas, coeffs, energies = gammas[order], coeffs[:, order], energies[order]
    residuals = np.abs(gammas.real + theta * energies)

    m = etas.shape[0]
    return GeneratorSolution(
        V_mat=np.array(V_mat if V_mat is not None else np.zeros((m, m))),
        theta=float(theta),
        A_mat=np.array(A_mat if A_mat is not None else np.zeros((m, m))),
        B_mat=np.array(B_mat if B_mat is not None else np.diag(1.0 / etas)),
        gammas=gammas,
        coeffs=coeffs,
        energies=energies,
        residuals=residuals,
        etas=etas,
    )


def solve_generator(spectrum, scheme, m=None, theta=1e-4, *, antisymmetrize=False, trim=False):
    """Run generator_matrix -> build_galerkin -> solve_regularized -> dirichlet_order."""
    if m is None:
        m = spectrum.m
    V_mat = generator_matrix(spectrum, scheme, m, antisymmetrize=antisymmetrize, trim=trim)
    etas = spectrum.etas[1:m + 1]
    A_mat, B_mat = build_galerkin(V_mat, etas, theta)
    solutions = solve_regularized(A_mat, B_mat)
    solution = dirichlet_order(solutions, etas, theta, V_mat=V_mat, A_mat=A_mat, B_mat=B_mat)
    logger.info(
        "Galerkin solve (m=%d, theta=%g, %s): leading frequencies %s",
        m, theta, scheme.order, np.round(solution.frequencies[:6], 4),
    )
    return solution


def reconstruct_eigenfunctions(solution, spectrum, count=None):
    """Sampled z_j(n) = sum_k a_jk v_k(n) for the ``count`` lowest-energy solutions."""
    count = solution.m if count is None else min(count, solution.m)
    basis = spectrum.vhats[:, 1:solution.m + 1]
    return basis @ solution.basis_coefficients()[:, :count]


def write_gamma_table(solution, path):
    rows = (
        (rank, gamma.real, gamma.imag, energy, residual)
        for rank, (gamma, energy, residual) in enumerate(
            zip(solution.gammas, solution.energies, solution.residuals), start=1)
    )
    return storage.write_csv(path, rows, header=['rank', 're_gamma', 'im_gamma', 'energy', 'residual'])


def write_matrix(matrix, path, first_index=1):
    matrix = np.asarray(matrix)
    header = ['i'] + [str(j) for j in range(first_index, first_index + matrix.shape[1])]
    rows = ([i] + list(row) for i, row in enumerate(matrix, start=first_index))
    return storage.write_csv(path, rows, header=header)


def write_eigenfunction_series(z_series, path, dt):
    index = np.arange(z_series.shape[0])
    header = ['n', 't']
    columns = [index, index * dt]
    for j in range(z_series.shape[1]):
        header += [f"re_z_{j + 1}", f"im_z_{j + 1}"]
        columns += [z_series[:, j].real, z_series[:, j].imag]
    rows = ([int(n)] + [float(c[n]) for c in columns[1:]] for n in index)
    return storage.write_csv(path, rows, header=header)
