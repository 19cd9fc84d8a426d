"""
Run every stage end to end.
Run with: python manage.py pipeline --config run.toml
"""
from spectral.management.base import PipelineCommand
from spectral.pipeline import Pipeline


class Command(PipelineCommand):
    help = 'Generates the trajectory, then builds kernels, spectra and Galerkin solutions for each Q'

    def execute_stage(self, config):
        self.stdout.write(self.style.SUCCESS(f"Running pipeline into {config.output_dir}..."))
        manifest = Pipeline(config).run('pipeline')
        self.report_results(manifest)
        self.stdout.write(self.style.SUCCESS(f"✓ Manifest written to {config.output_dir}/manifest.json"))
