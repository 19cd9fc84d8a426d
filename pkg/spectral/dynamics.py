"""
Test systems, trajectory generation and observation maps.

State layouts by system kind:

    fayad_torus_product  (x, y, z, alpha)   angles on T^3 x S^1
    l63_product          (x, y, z, alpha)   Lorenz 63 state x S^1
    l63_pure             (x, y, z)
    circle_rotation      (alpha,)
"""
import hashlib
import logging
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .choices import CouplingMap, SystemKind
from .exceptions import ArtifactError, ConfigError, DynamicsError
from . import storage

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi

FAYAD_NU = (math.sqrt(2.0), math.sqrt(10.0), 1.0)
L63_SIGMA = 10.0
L63_RHO = 28.0
L63_BETA = 8.0 / 3.0

DEFAULT_COUPLING = {
    SystemKind.FAYAD_TORUS_PRODUCT: CouplingMap.ADDITIVE,
    SystemKind.L63_PRODUCT: CouplingMap.NONLINEAR,
    SystemKind.L63_PURE: CouplingMap.IDENTITY,
    SystemKind.CIRCLE_ROTATION: CouplingMap.CIRCLE,
}

STATE_DIMENSION = {
    SystemKind.FAYAD_TORUS_PRODUCT: 4,
    SystemKind.L63_PRODUCT: 4,
    SystemKind.L63_PURE: 3,
    SystemKind.CIRCLE_ROTATION: 1,
}


@dataclass(frozen=True)
class SystemSpec:
    kind: SystemKind
    nu: tuple = FAYAD_NU
    omega: float = 1.0
    sigma: float = L63_SIGMA
    rho: float = L63_RHO
    beta: float = L63_BETA
    k_max: int = 32
    coupling: CouplingMap | None = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', SystemKind(self.kind))
        object.__setattr__(self, 'nu', tuple(float(v) for v in self.nu))
        coupling = self.coupling
        if coupling is None:
            coupling = DEFAULT_COUPLING.get(self.kind)
        object.__setattr__(
            self, 'coupling', CouplingMap(coupling) if coupling is not None else None,
        )

        problems = []
        if self.kind in (SystemKind.FAYAD_TORUS_PRODUCT, SystemKind.L63_PRODUCT,
                         SystemKind.CIRCLE_ROTATION) and not self.omega > 0:
            problems.append('omega')
        if len(self.nu) != 3:
            problems.append('nu')
        if int(self.k_max) != self.k_max or self.k_max < 0:
            problems.append('k_max')
        problems += [name for name in ('sigma', 'rho', 'beta') if not getattr(self, name) > 0]
        if self.kind in (SystemKind.FAYAD_TORUS_PRODUCT, SystemKind.L63_PRODUCT):
            if self.coupling not in (CouplingMap.ADDITIVE, CouplingMap.NONLINEAR):
                problems.append('coupling')
        elif self.kind != SystemKind.EXTERNAL and self.coupling != DEFAULT_COUPLING[self.kind]:
            problems.append('coupling')
        if problems:
            raise ConfigError(
                f"invalid {self.kind} system parameters: {', '.join(problems)}",
                keys=problems,
            )

    @property
    def state_dimension(self):
        return STATE_DIMENSION[self.kind]

    @property
    def has_rotation(self):
        return self.kind in (SystemKind.FAYAD_TORUS_PRODUCT, SystemKind.L63_PRODUCT,
                             SystemKind.CIRCLE_ROTATION)

    def as_dict(self):
        data = asdict(self)
        data['kind'] = str(self.kind)
        data['nu'] = list(self.nu)
        data['coupling'] = str(self.coupling) if self.coupling is not None else None
        return data


@dataclass(frozen=True)
class ObservedTrajectory:
    """N x d observations F(x_n) sampled every ``dt`` along one orbit."""
    samples: np.ndarray
    dt: float
    origin: str
    spec: SystemSpec | None = None
    source: str | None = None
    states: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, np.newaxis]
        if samples.ndim != 2 or samples.shape[0] < 2 or samples.shape[1] < 1:
            raise DynamicsError(
                f"trajectory needs at least 2 samples of dimension >= 1, got shape {samples.shape}"
            )
        if not np.all(np.isfinite(samples)):
            row = int(np.flatnonzero(~np.all(np.isfinite(samples), axis=1))[0])
            raise DynamicsError(f"non-finite observation in sample {row}")
        if not self.dt > 0:
            raise DynamicsError(f"sampling interval must be positive, got {self.dt}")
        samples.setflags(write=False)
        object.__setattr__(self, 'samples', samples)
        object.__setattr__(self, 'dt', float(self.dt))
        if self.states is not None:
            states = np.array(self.states, dtype=float)
            states.setflags(write=False)
            object.__setattr__(self, 'states', states)

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def times(self):
        return np.arange(self.n_samples) * self.dt

    def content_hash(self):
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.samples).tobytes())
        digest.update(repr(self.dt).encode())
        return digest.hexdigest()


# ============================================================================
# Vector fields
# ============================================================================

def fayad_density(x, y, z, k_max):
    """
    Truncated series 1 + sum_k e^{-k}/k Re[sum_{|l|<=k} e^{ik(x+y)+ilz}].

    The inner sum is cos(k(x+y)) times the Dirichlet kernel
    sin((k + 1/2) z) / sin(z / 2).
    """
    x, y, z = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(y, dtype=float), np.asarray(z, dtype=float),
    )
    if k_max == 0:
        return np.ones(x.shape)
    k = np.arange(1, k_max + 1, dtype=float)
    z = np.mod(z, TWO_PI)[..., np.newaxis]
    half = np.sin(0.5 * z)
    degenerate = np.abs(half) < 1e-12
    dirichlet = np.where(
        degenerate,
        2.0 * k + 1.0,
        np.sin((k + 0.5) * z) / np.where(degenerate, 1.0, half),
    )
    phase = np.cos(k * np.mod(x + y, TWO_PI)[..., np.newaxis])
    return 1.0 + np.sum(np.exp(-k) / k * phase * dirichlet, axis=-1)


def fayad_velocity(point, nu=FAYAD_NU, k_max=32):
    point = np.asarray(point, dtype=float)
    density = fayad_density(point[..., 0], point[..., 1], point[..., 2], k_max)
    if np.any(density <= 0):
        raise DynamicsError(
            f"torus density series is nonpositive ({np.min(density)}); truncation is broken"
        )
    return np.asarray(nu, dtype=float) / density[..., np.newaxis]


def l63_velocity(point, sigma=L63_SIGMA, rho=L63_RHO, beta=L63_BETA):
    x, y, z = np.asarray(point, dtype=float)
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


def rotation_state(alpha0, omega, t):
    """Angle of the periodic flow, advanced analytically and wrapped to [0, 2pi)."""
    return np.mod(alpha0 + omega * np.asarray(t, dtype=float), TWO_PI)


def _vector_field(spec):
    if spec.kind == SystemKind.FAYAD_TORUS_PRODUCT:
        return lambda point: fayad_velocity(point, spec.nu, spec.k_max)
    if spec.kind in (SystemKind.L63_PRODUCT, SystemKind.L63_PURE):
        return lambda point: l63_velocity(point, spec.sigma, spec.rho, spec.beta)
    return None


# ============================================================================
# Integration
# ============================================================================

def rk4_step(rhs, state, h):
    k1 = rhs(state)
    k2 = rhs(state + 0.5 * h * k1)
    k3 = rhs(state + 0.5 * h * k2)
    k4 = rhs(state + h * k3)
    return state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_flow(rhs, x0, h, steps):
    """Fixed-step RK4 from ``x0``; returns the state after ``steps`` steps."""
    state = np.asarray(x0, dtype=float)
    for _ in range(steps):
        state = rk4_step(rhs, state, h)
    return state


def substep_count(dt, max_substep):
    return max(1, math.ceil(dt / max_substep - 1e-9))


def initial_state(spec, seed):
    """Arbitrary initial condition derived deterministically from ``seed``."""
    rng = np.random.default_rng(seed)
    if spec.kind == SystemKind.FAYAD_TORUS_PRODUCT:
        return rng.uniform(0.0, TWO_PI, size=4)
    if spec.kind == SystemKind.L63_PRODUCT:
        xy = rng.uniform(-15.0, 15.0, size=2)
        return np.array([xy[0], xy[1], rng.uniform(5.0, 40.0), rng.uniform(0.0, TWO_PI)])
    if spec.kind == SystemKind.L63_PURE:
        xy = rng.uniform(-15.0, 15.0, size=2)
        return np.array([xy[0], xy[1], rng.uniform(5.0, 40.0)])
    if spec.kind == SystemKind.CIRCLE_ROTATION:
        return np.array([rng.uniform(0.0, TWO_PI)])
    raise ConfigError('external data has no initial state', keys=['system'])


def integrate_trajectory(spec, x0, dt, n_samples, spinup=0.0, *, max_substep=0.01):
    """
    Sample ``n_samples`` observations every ``dt`` after discarding ``spinup``.

    The continuous subsystem is integrated with fixed-step RK4 using
    ceil(dt / max_substep) substeps per sample; the rotation angle is advanced
    analytically. The spinup is rounded to a whole number of samples.
    """
    if spec.kind == SystemKind.EXTERNAL:
        raise ConfigError('external systems cannot be integrated', keys=['system'])
    problems = [
        key for key, ok in (('dt', dt > 0), ('N', n_samples >= 2), ('spinup', spinup >= 0))
        if not ok
    ]
    if problems:
        raise ConfigError(f"invalid integration parameters: {', '.join(problems)}", keys=problems)

    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (spec.state_dimension,):
        raise ConfigError(
            f"{spec.kind} expects a state of length {spec.state_dimension}, got {x0.shape}",
            keys=['x0'],
        )
    n_sub = substep_count(dt, max_substep)
    h = dt / n_sub
    spin_steps = int(round(spinup / dt))
    rhs = _vector_field(spec)
    is_torus = spec.kind == SystemKind.FAYAD_TORUS_PRODUCT

    states = np.empty((n_samples, spec.state_dimension))
    if rhs is not None:
        flow = x0[:3].copy()
        for step in range(spin_steps + n_samples):
            if step:
                flow = integrate_flow(rhs, flow, h, n_sub)
                if is_torus:
                    flow = np.mod(flow, TWO_PI)
                if not np.all(np.isfinite(flow)):
                    raise DynamicsError(f"non-finite state at integration step {step}")
            if step >= spin_steps:
                states[step - spin_steps, :3] = flow
    if spec.has_rotation:
        t = (spin_steps + np.arange(n_samples)) * dt
        states[:, -1] = rotation_state(x0[-1], spec.omega, t)

    logger.info(
        "integrated %s: %d samples, dt=%g, %d substeps, %d spinup samples",
        spec.kind, n_samples, dt, n_sub, spin_steps,
    )
    return ObservedTrajectory(
        samples=observe(spec, states),
        dt=dt,
        origin=str(spec.kind),
        spec=spec,
        states=states,
    )


# ============================================================================
# Observation maps
# ============================================================================

def observe(spec, state):
    """Observation map F; ``state`` may be one state or a stack of states."""
    state = np.asarray(state, dtype=float)
    coupling = spec.coupling
    if coupling == CouplingMap.CIRCLE:
        alpha = state[..., 0]
        return np.stack([np.sin(alpha), np.cos(alpha)], axis=-1)
    if coupling == CouplingMap.IDENTITY:
        return state[..., :3].copy()
    x, y, z, alpha = (state[..., i] for i in range(4))
    if coupling == CouplingMap.ADDITIVE:
        return np.stack([
            np.sin(alpha) + np.sin(x),
            np.cos(alpha) + np.sin(y),
            np.sin(2.0 * alpha) + np.sin(z),
        ], axis=-1)
    return np.stack([
        np.sin(alpha + x),
        np.cos(2.0 * alpha + y),
        np.cos(alpha + z),
    ], axis=-1)


# ============================================================================
# Files
# ============================================================================

def save_trajectory(trajectory, path, *, header=True):
    """Write samples as CSV and dt/spec metadata to a JSON sidecar."""
    path = Path(path)
    columns = [f"F{i}" for i in range(trajectory.dim)] if header else None
    storage.write_csv(path, trajectory.samples, header=columns)
    storage.write_json(storage.sidecar_path(path), {
        'dt': trajectory.dt,
        'origin': trajectory.origin,
        'n_samples': trajectory.n_samples,
        'dim': trajectory.dim,
        'spec': trajectory.spec.as_dict() if trajectory.spec else None,
        'content_hash': trajectory.content_hash(),
    })
    return path


def sidecar_dt(path):
    """Sampling interval recorded next to ``path``, or None without a sidecar."""
    sidecar = storage.sidecar_path(path)
    if not sidecar.exists():
        return None
    metadata = storage.read_json(sidecar)
    if not isinstance(metadata, dict) or 'dt' not in metadata:
        raise ArtifactError(f"{sidecar}: sidecar has no dt")
    return metadata['dt']


def load_trajectory(path, dt=None, *, header=None):
    """
    Read one sample per row. ``dt`` falls back to the JSON sidecar written by
    save_trajectory; ``header=None`` detects a non-numeric first row.
    """
    path = Path(path)
    samples = storage.read_numeric_csv(path, header=header)
    if dt is None:
        dt = sidecar_dt(path)
        if dt is None:
            raise ArtifactError(f"{path}: no dt given and no sidecar {storage.sidecar_path(path).name}")
    return ObservedTrajectory(
        samples=samples,
        dt=dt,
        origin=str(SystemKind.EXTERNAL),
        spec=SystemSpec(kind=SystemKind.EXTERNAL),
        source=str(path),
    )
