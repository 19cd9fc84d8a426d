"""
Convergence and consistency checks on the artifacts of a pipeline run.
"""
from spectral.management.base import PipelineCommand
from spectral.pipeline import diagnose


def _fmt(value, spec):
    # Non-finite values come back from the report as None
    return 'n/a' if value is None else format(value, spec)


class Command(PipelineCommand):
    help = 'Reports commutator and dispersion against Q, pair gaps, skew-symmetry and Dirichlet residuals'

    def execute_stage(self, config):
        report = diagnose(config)
        self.stdout.write(self.style.SUCCESS('Delay sweep:'))
        for row in report['delay_sweep']:
            self.stdout.write(
                f"  Q={row['Q']:<5} commutator={_fmt(row['commutator'], '.3e')} "
                f"dispersion={_fmt(row['dispersion'], '.4f')} "
                f"(ratio {_fmt(row['dispersion_ratio'], '.3f')})"
            )
        for row in report['skew']:
            self.stdout.write(f"  Q={row['Q']:<5} skew residual={_fmt(row['skew_residual'], '.4f')}")
        worst = max((row['gap'] for row in report['pair_gaps'] if row['gap'] is not None), default=None)
        if worst is not None:
            self.stdout.write(f"  largest eigenvalue pair gap {worst:.4f}")
        self.stdout.write(self.style.SUCCESS(
            f"✓ Diagnostics written to {config.output_dir}/diagnostics"
        ))
