"""
Pipeline configuration.

Values are resolved in order: ``settings.KOOPMAN`` defaults, the full-scale
overrides when ``full_scale`` is set, a TOML run file, then command flags.
"""
import logging
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from django.conf import settings

from .choices import CouplingMap, FDOrder, SystemKind
from .dynamics import FAYAD_NU, L63_BETA, L63_RHO, L63_SIGMA, SystemSpec, initial_state, sidecar_dt
from .exceptions import ConfigError

logger = logging.getLogger(__name__)

L63_KINDS = (SystemKind.L63_PRODUCT, SystemKind.L63_PURE)


@dataclass(frozen=True)
class PipelineConfig:
    system: str = SystemKind.FAYAD_TORUS_PRODUCT
    data: Path | None = None
    n: int = 8000
    dt: float = 0.01
    spinup: float | None = None
    seed: int = 0
    q: tuple = (400,)
    epsilon: float | str = 'auto'
    k_nn: int | None = None
    m: int = 50
    theta: float = 1e-4
    scheme: str = FDOrder.FIRST_FORWARD
    output_dir: Path = Path('runs')
    header: bool = True
    workers: int = 1
    parallel: bool = False
    full_scale: bool = False
    antisymmetrize: bool = False
    trim: bool = False
    dump_matrices: bool = False
    x0: tuple | None = None
    omega: float = 1.0
    nu: tuple = FAYAD_NU
    sigma: float = L63_SIGMA
    rho: float = L63_RHO
    beta: float = L63_BETA
    k_max: int = 32
    coupling: str | None = None

    @property
    def is_external(self):
        return self.system == SystemKind.EXTERNAL

    @property
    def auto_epsilon(self):
        return self.epsilon == 'auto'

    def system_spec(self):
        if self.is_external:
            return SystemSpec(kind=SystemKind.EXTERNAL)
        return SystemSpec(
            kind=self.system, nu=self.nu, omega=self.omega, sigma=self.sigma,
            rho=self.rho, beta=self.beta, k_max=self.k_max, coupling=self.coupling,
        )

    def initial_state(self):
        if self.x0 is not None:
            return np.array(self.x0, dtype=float)
        return initial_state(self.system_spec(), self.seed)

    def as_dict(self):
        data = asdict(self)
        for key in ('data', 'output_dir'):
            if data[key] is not None:
                data[key] = str(data[key])
        for key in ('q', 'nu', 'x0'):
            if data[key] is not None:
                data[key] = list(data[key])
        return data


FIELD_NAMES = frozenset(f.name for f in fields(PipelineConfig))


def settings_defaults():
    koopman = settings.KOOPMAN
    return {
        'n': koopman['N'],
        'dt': koopman['DT'],
        'q': koopman['Q'],
        'epsilon': koopman['EPSILON'],
        'k_nn': koopman['K_NN'],
        'm': koopman['M'],
        'theta': koopman['THETA'],
        'scheme': koopman['SCHEME'],
        'seed': koopman['SEED'],
        'k_max': koopman['FAYAD_K_MAX'],
        'output_dir': koopman['OUTPUT_DIR'],
        'workers': koopman['WORKERS'],
    }


def read_config_file(path):
    path = Path(path)
    try:
        with path.open('rb') as handle:
            data = tomllib.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"configuration file {path} does not exist", keys=['config']) from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", keys=['config']) from exc
    unknown = sorted(set(data) - FIELD_NAMES)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}", keys=unknown)
    return data


def _as_tuple(value):
    if value is None:
        return None
    if isinstance(value, (int, float)):
        return (value,)
    return tuple(value)


def _coerce(values):
    """Convert loose file and flag values to field types; returns (values, bad keys)."""
    converters = {
        'n': int, 'seed': int, 'm': int, 'workers': int, 'k_max': int,
        'dt': float, 'theta': float, 'omega': float, 'sigma': float,
        'rho': float, 'beta': float,
        'spinup': lambda v: None if v is None else float(v),
        'k_nn': lambda v: None if v in (None, 0) else int(v),
        'q': lambda v: tuple(int(x) for x in _as_tuple(v)),
        'nu': lambda v: tuple(float(x) for x in v),
        'x0': lambda v: None if v is None else tuple(float(x) for x in v),
        'epsilon': lambda v: 'auto' if str(v).lower() == 'auto' else float(v),
        'data': lambda v: None if v in (None, '') else Path(v),
        'output_dir': Path,
    }
    converted, bad = {}, []
    for key, value in values.items():
        try:
            converted[key] = converters[key](value) if key in converters else value
        except (TypeError, ValueError):
            bad.append(key)
    return converted, bad


def _problems(config):
    spec_problems = []
    if not config.is_external:
        try:
            config.system_spec()
        except ConfigError as exc:
            spec_problems = list(exc.keys)
        except ValueError:
            spec_problems = ['system']
    checks = [
        ('system', config.system in SystemKind.values),
        ('data', not config.is_external or (config.data is not None and config.data.exists())),
        ('n', config.n >= 2),
        ('dt', config.dt > 0),
        ('spinup', config.spinup is None or config.spinup >= 0),
        ('q', len(config.q) > 0 and all(
            q >= 1 and (config.is_external or q < config.n) for q in config.q)),
        ('epsilon', config.auto_epsilon or config.epsilon > 0),
        ('k_nn', config.k_nn is None or config.k_nn >= 1),
        ('m', config.m >= 1),
        ('theta', config.theta >= 0),
        ('scheme', config.scheme in FDOrder.values),
        ('workers', config.workers >= 1),
        ('coupling', config.coupling is None or config.coupling in CouplingMap.values),
    ]
    problems = [key for key, ok in checks if not ok]
    return problems + [key for key in spec_problems if key not in problems]


def _apply_data_source(values, explicit):
    """External data always wins over a named system; its sidecar dt ranks below explicit values."""
    system = explicit.get('system')
    if system not in (None, SystemKind.EXTERNAL):
        logger.warning("--data given; ignoring system %s", system)
    values['system'] = SystemKind.EXTERNAL
    if 'dt' not in explicit:
        recorded = sidecar_dt(Path(values['data']))
        if recorded is not None:
            values['dt'] = recorded


def build_config(path=None, **overrides):
    """
    Merge defaults, an optional TOML file and flag overrides into a validated
    PipelineConfig. Overrides that are None are ignored. All invalid keys are
    reported in a single ConfigError.
    """
    file_values = read_config_file(path) if path else {}
    flag_values = {key: value for key, value in overrides.items() if value is not None}
    unknown = sorted(set(flag_values) - FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}", keys=unknown)

    values = settings_defaults()
    full_scale = bool(flag_values.get('full_scale', file_values.get('full_scale', False)))
    if full_scale:
        values.update(n=settings.KOOPMAN['FULL_N'], q=settings.KOOPMAN['FULL_Q'])
    values.update(file_values)
    values.update(flag_values)
    if values.get('data'):
        _apply_data_source(values, explicit={**file_values, **flag_values})

    values, bad = _coerce(values)
    if bad:
        raise ConfigError(f"invalid configuration values: {', '.join(sorted(bad))}", keys=bad)
    if values.get('spinup') is None:
        values['spinup'] = default_spinup(values.get('system', PipelineConfig.system), full_scale)

    config = PipelineConfig(**values)
    problems = _problems(config)
    if problems:
        raise ConfigError(f"invalid configuration: {', '.join(problems)}", keys=problems)
    logger.debug("resolved configuration: %s", config.as_dict())
    return config


def default_spinup(system, full_scale=False):
    koopman = settings.KOOPMAN
    if system in L63_KINDS:
        return float(koopman['FULL_SPINUP_L63'] if full_scale else koopman['SPINUP_L63'])
    return float(koopman['SPINUP_TORUS'])
