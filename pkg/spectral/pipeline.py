"""
Stage orchestration for the management commands.

generate/load -> kernel (per Q) -> spectrum -> galerkin, with a kernel cache
keyed by content hash, Run records and a manifest. Output layout::

    <output_dir>/trajectory.csv, trajectory.json
    <output_dir>/manifest.json
    <output_dir>/cache/markov-<key>.bin (.npz when sparse)
    <output_dir>/q0400/kernel.json, bandwidth.csv, distance.bin, kernel.bin
    <output_dir>/q0400/spectrum.npz, eigenvalues.csv, eigenfunctions.csv
    <output_dir>/q0400/galerkin.npz, gammas.csv, V.csv, V_abs.csv,
                       V_first_forward.csv, V_second_central.csv, z_series.csv
    <output_dir>/diagnostics/*.csv, report.json
"""
import hashlib
import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import django
import numpy as np
import scipy
from django.conf import settings
from django.db.models import F
from django.utils import timezone

import koopman_lab
from . import delay_kernel, diagnostics, dynamics, galerkin, markov, spectrum, storage
from .choices import FDOrder, RunStatus
from .exceptions import ArtifactError, KoopmanError
from .managers import experiment_scope
from .models import Experiment, KernelCacheEntry, Run

logger = logging.getLogger(__name__)

COMMAND_STAGES = {
    'generate': (),
    'kernel': ('kernel',),
    'spectrum': ('spectrum',),
    'galerkin': ('galerkin',),
    'pipeline': ('kernel', 'spectrum', 'galerkin'),
}

# Number of lowest-energy z_j series exported
EXPORTED_SERIES = 10
DIRICHLET_COUNT = 6


@dataclass(frozen=True)
class RunLayout:
    root: Path

    @property
    def trajectory(self):
        return self.root / 'trajectory.csv'

    @property
    def manifest(self):
        return self.root / 'manifest.json'

    @property
    def cache_dir(self):
        return self.root / 'cache'

    @property
    def diagnostics_dir(self):
        return self.root / 'diagnostics'

    def q_dir(self, q):
        return self.root / f"q{q:04d}"

    def require(self, path, stage_name):
        if not path.exists():
            raise ArtifactError(
                f"missing {path.relative_to(self.root)} in {self.root}; run {stage_name} first"
            )
        return path


@contextmanager
def stage(name, timings=None):
    """Label KoopmanErrors raised inside with ``name`` and record the elapsed time."""
    started = time.perf_counter()
    try:
        yield
    except KoopmanError as exc:
        if exc.stage is None:
            exc.stage = name
        raise
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - started


def versions():
    return {
        'koopman_lab': koopman_lab.__version__,
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'django': django.get_version(),
    }


def cache_key(trajectory_hash, q, epsilon, k_nn, *, n_emb, seed):
    """
    Content key of a normalized operator: trajectory, Q, bandwidth rule and
    k_nn. A tuned bandwidth depends on the seed once the tuning subsamples.
    """
    if epsilon == 'auto':
        koopman = settings.KOOPMAN
        sample = koopman['TUNE_SAMPLE']
        rule = f"auto/{koopman['TUNE_GRID_POINTS']}/{sample}"
        if sample is not None and sample < n_emb * n_emb:
            rule += f"/seed={seed}"
    else:
        rule = repr(float(epsilon))
    text = f"{trajectory_hash}|Q={q}|eps={rule}|k_nn={k_nn}"
    return hashlib.sha256(text.encode()).hexdigest()


def register_experiment(trajectory, name):
    experiment, created = Experiment.objects.get_or_create(
        trajectory_hash=trajectory.content_hash(),
        defaults={
            'name': name,
            'system': trajectory.origin,
            'n_samples': trajectory.n_samples,
            'dt': trajectory.dt,
        },
    )
    if created:
        logger.info("registered experiment %s", experiment)
    return experiment


@contextmanager
def recorded_run(command, config):
    """Run row for the current experiment, marked succeeded or failed on exit."""
    run = Run.objects.create(
        command=command,
        config=config.as_dict(),
        output_dir=str(config.output_dir),
    )
    try:
        yield run
    except Exception as exc:
        run.status = RunStatus.FAILED
        run.error = str(exc) or type(exc).__name__
        raise
    else:
        run.status = RunStatus.SUCCEEDED
    finally:
        run.finished_at = timezone.now()
        run.save()


class Pipeline:
    """
    One invocation of a pipeline command against ``config.output_dir``.

    Numerics for independent Q values may run in worker threads; database
    access stays on the calling thread.
    """

    def __init__(self, config):
        self.config = config
        self.layout = RunLayout(Path(config.output_dir))
        self.timings = {}
        self.trajectory = None
        self.experiment = None
        self.initial_state = None

    # ------------------------------------------------------------------
    # Trajectory
    # ------------------------------------------------------------------

    def generate(self):
        config = self.config
        with stage('generate', self.timings):
            if config.is_external:
                trajectory = dynamics.load_trajectory(config.data, dt=config.dt)
            else:
                self.initial_state = config.initial_state()
                trajectory = dynamics.integrate_trajectory(
                    config.system_spec(), self.initial_state, config.dt, config.n,
                    config.spinup, max_substep=settings.KOOPMAN['MAX_SUBSTEP'],
                )
            dynamics.save_trajectory(trajectory, self.layout.trajectory, header=config.header)
        self._attach(trajectory)
        return trajectory

    def load_trajectory(self):
        with stage('load', self.timings):
            self.layout.require(self.layout.trajectory, 'generate')
            trajectory = dynamics.load_trajectory(self.layout.trajectory)
        self._attach(trajectory)
        return trajectory

    def _attach(self, trajectory):
        self.trajectory = trajectory
        self.experiment = register_experiment(
            trajectory, name=f"{trajectory.origin} N={trajectory.n_samples}",
        )

    # ------------------------------------------------------------------
    # Stages (thread-safe: files only, no database access)
    # ------------------------------------------------------------------

    def _build_markov(self, q, workers):
        config = self.config
        koopman = settings.KOOPMAN
        q_dir = self.layout.q_dir(q)
        distances = delay_kernel.delay_distance_matrix(self.trajectory, q, workers=workers)
        bandwidth = None
        if config.auto_epsilon:
            epsilon, bandwidth = delay_kernel.tune_bandwidth(
                distances,
                n_points=koopman['TUNE_GRID_POINTS'],
                sample_size=koopman['TUNE_SAMPLE'],
                seed=config.seed,
            )
            storage.write_csv(
                q_dir / 'bandwidth.csv', bandwidth.rows(),
                header=['epsilon', 'kernel_sum', 'slope'],
            )
        else:
            epsilon = config.epsilon
        if config.dump_matrices:
            distances.save(q_dir / 'distance.bin')
        kernel = delay_kernel.gaussian_kernel(distances, epsilon)
        del distances
        if config.dump_matrices:
            kernel.save(q_dir / 'kernel.bin')
        if config.k_nn is not None:
            kernel = delay_kernel.sparsify_knn(kernel, config.k_nn)
        return markov.normalize(kernel), bandwidth

    def run_kernel(self, q, key, cached_path, workers, timings):
        with stage(f"kernel Q={q}", timings):
            if cached_path is not None:
                logger.info("kernel cache hit for Q=%d: %s", q, cached_path)
                markov_bundle, bandwidth = markov.MarkovBundle.load(cached_path), None
                path = Path(cached_path)
            else:
                logger.info("kernel cache miss for Q=%d", q)
                markov_bundle, bandwidth = self._build_markov(q, workers)
                suffix = '.npz' if markov_bundle.is_sparse else '.bin'
                path = markov_bundle.save(self.layout.cache_dir / f"markov-{key[:32]}{suffix}")
            summary = {
                'Q': q,
                'epsilon': markov_bundle.epsilon,
                'k_nn': self.config.k_nn,
                'n_emb': markov_bundle.n_emb,
                'stochastic_residual': markov_bundle.stochastic_residual(),
                'cache_key': key,
                'cache_path': str(path),
                'cache_hit': cached_path is not None,
            }
            if bandwidth is not None:
                summary['dimension_estimate'] = bandwidth.dimension
                summary['bandwidth_flat'] = bandwidth.flat
            storage.write_json(self.layout.q_dir(q) / 'kernel.json', summary)
        return markov_bundle, summary

    def load_markov(self, q):
        with stage(f"kernel Q={q}"):
            path = self.layout.require(self.layout.q_dir(q) / 'kernel.json', 'kernel')
            summary = storage.read_json(path)
            return markov.MarkovBundle.load(summary['cache_path'])

    def run_spectrum(self, q, markov_bundle, timings):
        koopman = settings.KOOPMAN
        q_dir = self.layout.q_dir(q)
        with stage(f"spectrum Q={q}", timings):
            result = spectrum.eigendecompose(
                markov_bundle, self.config.m,
                dense_limit=koopman['DENSE_EIGEN_LIMIT'], tol=koopman['EIGEN_TOL'],
            )
            result.save(q_dir / 'spectrum.npz')
            spectrum.write_eigenvalue_table(result, q_dir / 'eigenvalues.csv')
            spectrum.write_eigenfunction_table(result, q_dir / 'eigenfunctions.csv', self.trajectory.dt)
        return result

    def load_spectrum(self, q):
        with stage(f"spectrum Q={q}"):
            path = self.layout.require(self.layout.q_dir(q) / 'spectrum.npz', 'spectrum')
            return spectrum.MarkovSpectrum.load(path)

    def run_galerkin(self, q, markov_spectrum, timings):
        config = self.config
        dt = self.trajectory.dt
        q_dir = self.layout.q_dir(q)
        with stage(f"galerkin Q={q}", timings):
            scheme = galerkin.FDScheme(config.scheme, dt)
            solution = galerkin.solve_generator(
                markov_spectrum, scheme, config.m, config.theta,
                antisymmetrize=config.antisymmetrize, trim=config.trim,
            )
            solution.save(q_dir / 'galerkin.npz')
            galerkin.write_gamma_table(solution, q_dir / 'gammas.csv')
            galerkin.write_matrix(solution.V_mat, q_dir / 'V.csv')
            galerkin.write_matrix(np.abs(solution.V_mat), q_dir / 'V_abs.csv')
            for order in FDOrder:
                with_constant = galerkin.generator_matrix(
                    markov_spectrum, galerkin.FDScheme(order, dt), config.m,
                    antisymmetrize=config.antisymmetrize, include_constant=True, trim=config.trim,
                )
                galerkin.write_matrix(with_constant, q_dir / f"V_{order.value}.csv", first_index=0)
            series = galerkin.reconstruct_eigenfunctions(solution, markov_spectrum, EXPORTED_SERIES)
            galerkin.write_eigenfunction_series(series, q_dir / 'z_series.csv', dt)
        return solution

    def _branch(self, q, stages, key, cached_path, workers):
        timings = {}
        summary = {'Q': q}
        markov_bundle = markov_spectrum = None
        if 'kernel' in stages:
            markov_bundle, kernel_summary = self.run_kernel(q, key, cached_path, workers, timings)
            summary.update(kernel_summary)
        if 'spectrum' in stages:
            if markov_bundle is None:
                markov_bundle = self.load_markov(q)
            markov_spectrum = self.run_spectrum(q, markov_bundle, timings)
            summary['lambdas'] = markov_spectrum.lambdas[:11]
        if 'galerkin' in stages:
            if markov_spectrum is None:
                markov_spectrum = self.load_spectrum(q)
            solution = self.run_galerkin(q, markov_spectrum, timings)
            summary['frequencies'] = solution.frequencies[:EXPORTED_SERIES]
        return summary, timings

    # ------------------------------------------------------------------
    # Cache index (calling thread only)
    # ------------------------------------------------------------------

    def _cached_path(self, key):
        entry = KernelCacheEntry.objects.filter(key=key).first()
        if entry is not None and Path(entry.path).exists():
            return entry.path
        return None

    def _record_cache(self, summary):
        if 'cache_key' not in summary:
            return
        if summary['cache_hit']:
            KernelCacheEntry.objects.filter(key=summary['cache_key']).update(hits=F('hits') + 1)
            return
        KernelCacheEntry.objects.update_or_create(
            key=summary['cache_key'],
            defaults={
                'q': summary['Q'],
                'epsilon': summary['epsilon'],
                'k_nn': summary['k_nn'],
                'path': summary['cache_path'],
            },
        )

    # ------------------------------------------------------------------
    # Sweep and manifest
    # ------------------------------------------------------------------

    def sweep(self, stages):
        config = self.config
        qs = list(dict.fromkeys(config.q))
        trajectory_hash = self.trajectory.content_hash()
        keys = {
            q: cache_key(
                trajectory_hash, q, config.epsilon, config.k_nn,
                n_emb=self.trajectory.n_samples - q + 1, seed=config.seed,
            )
            for q in qs
        }
        cached = {q: self._cached_path(keys[q]) if 'kernel' in stages else None for q in qs}

        if config.parallel and len(qs) > 1:
            max_workers = config.workers if config.workers > 1 else len(qs)
            logger.info("running %d Q branches on %d threads", len(qs), max_workers)
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                futures = [
                    pool.submit(self._branch, q, stages, keys[q], cached[q], 1) for q in qs
                ]
                outcomes = [future.result() for future in futures]
        else:
            outcomes = [
                self._branch(q, stages, keys[q], cached[q], config.workers) for q in qs
            ]

        results = {}
        for summary, timings in outcomes:
            self._record_cache(summary)
            self.timings.update(timings)
            results[str(summary['Q'])] = summary
        return results

    def write_manifest(self, command, results, started):
        previous = storage.read_json(self.layout.manifest) if self.layout.manifest.exists() else {}
        merged_results = previous.get('results', {})
        for q, summary in results.items():
            merged_results.setdefault(q, {}).update(summary)
        parameters = self.config.as_dict()
        if self.initial_state is not None:
            parameters['x0'] = self.initial_state
        elif previous.get('parameters', {}).get('x0') is not None:
            parameters['x0'] = previous['parameters']['x0']
        manifest = {
            'command': command,
            'parameters': parameters,
            'settings': {
                key: settings.KOOPMAN[key]
                for key in ('MAX_SUBSTEP', 'DENSE_EIGEN_LIMIT', 'EIGEN_TOL',
                            'TUNE_GRID_POINTS', 'TUNE_SAMPLE')
            },
            'trajectory': {
                'path': self.layout.trajectory,
                'origin': self.trajectory.origin,
                'content_hash': self.trajectory.content_hash(),
                'n_samples': self.trajectory.n_samples,
                'dim': self.trajectory.dim,
                'dt': self.trajectory.dt,
            },
            'results': merged_results,
            'versions': versions(),
            'timings': {**previous.get('timings', {}), **self.timings},
            'started_at': started,
            'finished_at': timezone.now(),
        }
        storage.write_json(self.layout.manifest, manifest)
        return storage.read_json(self.layout.manifest)

    def run(self, command):
        """Execute ``command`` (a key of COMMAND_STAGES); returns the manifest."""
        started = timezone.now()
        stages = COMMAND_STAGES[command]
        if command in ('generate', 'pipeline'):
            self.generate()
        else:
            self.load_trajectory()
        with experiment_scope(self.experiment), recorded_run(command, self.config) as run:
            results = self.sweep(stages) if stages else {}
            run.manifest = self.write_manifest(command, results, started)
        return run.manifest


# ----------------------------------------------------------------------
# Diagnostics report
# ----------------------------------------------------------------------

def _phase_row(q, phis, dt):
    frequency, peak = diagnostics.dominant_frequency(phis[:, 1], dt)
    row = {'Q': q, 'frequency': frequency, 'peak_bin': peak}
    if peak > 0 and phis.shape[1] > 2:
        period = 1.0 / (frequency * dt)
        row.update(
            period_samples=period,
            lag=diagnostics.phase_lag(phis[:, 1], phis[:, 2], period),
            quarter_period=period / 4.0,
        )
    return row


def diagnose(config):
    """
    Commutator and dispersion against Q, eigenvalue pair gaps, skew-symmetry
    and Dirichlet residuals, and eigenfunction phase structure, computed from
    the artifacts of a previous pipeline run.

    The delay sweep covers the manifest Q values plus DIAGNOSE_BASELINE_Q, all
    at the bandwidth stored for the largest manifest Q; ratios are taken
    against the smallest Q.
    """
    layout = RunLayout(Path(config.output_dir))
    if not layout.manifest.exists() or not layout.trajectory.exists():
        raise ArtifactError(
            f"no pipeline artifacts in {layout.root}; run pipeline first", stage='diagnose',
        )
    timings = {}
    with stage('diagnose', timings):
        manifest = storage.read_json(layout.manifest)
        trajectory = dynamics.load_trajectory(layout.trajectory)
        qs = sorted(int(q) for q in manifest.get('results', {}))
        if not qs:
            raise ArtifactError(f"manifest in {layout.root} lists no Q values; run pipeline first")

        kernel_summaries = {
            q: storage.read_json(layout.require(layout.q_dir(q) / 'kernel.json', 'kernel')) for q in qs
        }
        baseline = [
            q for q in settings.KOOPMAN['DIAGNOSE_BASELINE_Q'] if q < trajectory.n_samples - 1
        ]
        sweep = diagnostics.delay_sweep(
            trajectory, sorted(set(qs) | set(baseline)), kernel_summaries[qs[-1]]['epsilon'],
        )

        pairs, galerkin_rows, dirichlet_rows, phase_rows = [], [], [], []
        for q in qs:
            q_dir = layout.q_dir(q)
            markov_spectrum = spectrum.MarkovSpectrum.load(
                layout.require(q_dir / 'spectrum.npz', 'spectrum'))
            solution = galerkin.GeneratorSolution.load(
                layout.require(q_dir / 'galerkin.npz', 'galerkin'))

            for k, gap in enumerate(diagnostics.pair_gaps(markov_spectrum.lambdas), start=1):
                pairs.append({'Q': q, 'pair': k, 'gap': gap})
            galerkin_rows.append({
                'Q': q,
                'skew_residual': diagnostics.skew_residual(solution.V_mat),
                'theta': solution.theta,
            })
            residuals = diagnostics.dirichlet_residuals(solution, DIRICHLET_COUNT)
            for rank, residual in enumerate(residuals, start=1):
                dirichlet_rows.append({
                    'Q': q, 'rank': rank,
                    'im_gamma': solution.gammas[rank - 1].imag,
                    'energy': solution.energies[rank - 1],
                    'relative_residual': residual,
                })
            phase_rows.append(_phase_row(q, markov_spectrum.phis, trajectory.dt))

        base = sweep[0]
        for row in sweep:
            row['commutator_ratio'] = row['commutator'] / base['commutator'] if base['commutator'] else np.nan
            row['dispersion_ratio'] = row['dispersion'] / base['dispersion'] if base['dispersion'] else np.nan

        out = layout.diagnostics_dir
        _write_rows(out / 'delay_sweep.csv', sweep,
                    ['Q', 'epsilon', 'commutator', 'commutator_ratio', 'dispersion', 'dispersion_ratio'])
        _write_rows(out / 'pair_gaps.csv', pairs, ['Q', 'pair', 'gap'])
        _write_rows(out / 'skew.csv', galerkin_rows, ['Q', 'skew_residual', 'theta'])
        _write_rows(out / 'dirichlet.csv', dirichlet_rows,
                    ['Q', 'rank', 'im_gamma', 'energy', 'relative_residual'])
        _write_rows(out / 'phase.csv', phase_rows,
                    ['Q', 'frequency', 'peak_bin', 'period_samples', 'lag', 'quarter_period'])

    report = {
        'output_dir': layout.root,
        'delay_sweep': sweep,
        'pair_gaps': pairs,
        'skew': galerkin_rows,
        'dirichlet': dirichlet_rows,
        'phase': phase_rows,
        'timings': timings,
    }
    storage.write_json(out / 'report.json', report)

    experiment = register_experiment(trajectory, name=f"{trajectory.origin} N={trajectory.n_samples}")
    with experiment_scope(experiment), recorded_run('diagnose', config) as run:
        run.manifest = storage.read_json(out / 'report.json')
    return run.manifest


def _write_rows(path, rows, columns):
    storage.write_csv(path, ([row.get(column, '') for column in columns] for row in rows), header=columns)
