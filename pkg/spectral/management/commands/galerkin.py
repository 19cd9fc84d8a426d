"""
Regularized Galerkin approximation of the generator for every Q.
"""
from spectral.management.base import PipelineCommand
from spectral.pipeline import Pipeline


class Command(PipelineCommand):
    help = 'Solves the regularized generator eigenproblem from existing spectra'

    def execute_stage(self, config):
        manifest = Pipeline(config).run('galerkin')
        self.stdout.write(self.style.SUCCESS('✓ Galerkin solutions ready'))
        self.report_results(manifest)
