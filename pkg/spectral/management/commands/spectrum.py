"""
Leading eigenpairs of the normalized kernel for every Q.
"""
from spectral.management.base import PipelineCommand
from spectral.pipeline import Pipeline


class Command(PipelineCommand):
    help = 'Computes eigenvalues, Sobolev weights and eigenfunctions from existing kernels'

    def execute_stage(self, config):
        manifest = Pipeline(config).run('spectrum')
        self.stdout.write(self.style.SUCCESS('✓ Spectra ready'))
        self.report_results(manifest)
