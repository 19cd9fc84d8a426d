"""
Shared option parsing and error handling for the pipeline commands.
"""
import logging

from django.core.management import call_command
from django.core.management.base import BaseCommand, CommandError
from django.db import DEFAULT_DB_ALIAS, connections
from django.db.migrations.executor import MigrationExecutor

from spectral.config import FIELD_NAMES, build_config
from spectral.exceptions import KoopmanError

logger = logging.getLogger('spectral.commands')


def ensure_schema(database=DEFAULT_DB_ALIAS):
    """Apply pending migrations so the run index exists on a fresh KOOPMAN_HOME."""
    connection = connections[database]
    executor = MigrationExecutor(connection)
    if executor.migration_plan(executor.loader.graph.leaf_nodes()):
        call_command('migrate', database=database, interactive=False, verbosity=0)


class PipelineCommand(BaseCommand):
    """
    Base for commands configured by a TOML file plus flags; flags override
    file values and file values override settings.KOOPMAN.
    """

    def add_arguments(self, parser):
        parser.add_argument('--config', help='TOML run configuration')
        system = parser.add_argument_group('system')
        system.add_argument('--system', help='fayad_torus_product, l63_product, l63_pure, circle_rotation or external')
        system.add_argument('--data', help='CSV of external observations (implies --system external)')
        system.add_argument('--n', type=int, help='number of samples')
        system.add_argument('--dt', type=float, help='sampling interval')
        system.add_argument('--spinup', type=float, help='time discarded before sampling')
        system.add_argument('--seed', type=int, help='seed of the initial condition and bandwidth sampling')
        system.add_argument('--x0', type=float, nargs='+', help='explicit initial state')
        system.add_argument('--omega', type=float, help='rotation frequency')
        system.add_argument('--nu', type=float, nargs=3, help='torus frequency vector')
        system.add_argument('--sigma', type=float)
        system.add_argument('--rho', type=float)
        system.add_argument('--beta', type=float)
        system.add_argument('--k-max', dest='k_max', type=int, help='torus density series truncation')
        system.add_argument('--coupling', help='observation map of the product systems')

        numerics = parser.add_argument_group('numerics')
        numerics.add_argument('--q', type=int, nargs='+', help='delay counts to sweep')
        numerics.add_argument('--epsilon', help="kernel bandwidth or 'auto'")
        numerics.add_argument('--k-nn', dest='k_nn', type=int, help='nearest neighbours kept per row')
        numerics.add_argument('--m', type=int, help='number of nonconstant eigenfunctions')
        numerics.add_argument('--theta', type=float, help='diffusion regularization strength')
        numerics.add_argument('--scheme', help='first_forward or second_central')
        numerics.add_argument('--antisymmetrize', action='store_true', default=None)
        numerics.add_argument('--trim', action='store_true', default=None,
                              help='drop incomplete finite-difference stencils from inner products')

        output = parser.add_argument_group('output')
        output.add_argument('--output-dir', dest='output_dir')
        output.add_argument('--no-header', dest='header', action='store_false', default=None,
                            help='write the trajectory CSV without a header row')
        output.add_argument('--workers', type=int, help='threads per stage, or per Q with --parallel')
        output.add_argument('--parallel', action='store_true', default=None,
                            help='run the Q values concurrently')
        output.add_argument('--full-scale', dest='full_scale', action='store_true', default=None,
                            help='N=50000, Q=2000 and the long Lorenz 63 spinup')
        output.add_argument('--dump-matrices', dest='dump_matrices', action='store_true', default=None,
                            help='also write the distance and kernel matrices')

    def handle(self, *args, **options):
        overrides = {key: options.get(key) for key in FIELD_NAMES}
        try:
            config = build_config(options.get('config'), **overrides)
            ensure_schema(options.get('database', DEFAULT_DB_ALIAS))
            self.execute_stage(config)
        except KoopmanError as exc:
            logger.error("%s failed: %s", self.command_name, exc)
            raise CommandError(str(exc), returncode=exc.exit_code) from exc

    @property
    def command_name(self):
        return self.__module__.rsplit('.', 1)[-1]

    def execute_stage(self, config):
        raise NotImplementedError

    def report_results(self, manifest):
        for q, summary in sorted(manifest.get('results', {}).items(), key=lambda item: int(item[0])):
            parts = [f"Q={q}"]
            if 'epsilon' in summary:
                hit = ' (cached)' if summary.get('cache_hit') else ''
                parts.append(f"eps={summary['epsilon']:.4g}{hit}")
            if 'lambdas' in summary and len(summary['lambdas']) > 1:
                parts.append(f"lambda_1={summary['lambdas'][1]:.6f}")
            if 'frequencies' in summary:
                frequencies = ', '.join(f"{f:+.3f}" for f in summary['frequencies'][:6])
                parts.append(f"Im gamma: {frequencies}")
            self.stdout.write(f"  {' '.join(parts)}")
