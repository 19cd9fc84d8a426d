"""
Delay-coordinate kernels and Markov normalization for every Q.
"""
from spectral.management.base import PipelineCommand
from spectral.pipeline import Pipeline


class Command(PipelineCommand):
    help = 'Builds and normalizes the delay-coordinate kernel for each Q from an existing trajectory'

    def execute_stage(self, config):
        manifest = Pipeline(config).run('kernel')
        self.stdout.write(self.style.SUCCESS('✓ Kernels ready'))
        self.report_results(manifest)
