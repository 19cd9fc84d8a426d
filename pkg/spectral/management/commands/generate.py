"""
Generate (or ingest) the observed trajectory.
Run with: python manage.py generate --system l63_product --n 8000
"""
from spectral.management.base import PipelineCommand
from spectral.pipeline import Pipeline


class Command(PipelineCommand):
    help = 'Integrates a test system (or loads external data) and writes trajectory.csv with its sidecar'

    def execute_stage(self, config):
        manifest = Pipeline(config).run('generate')
        trajectory = manifest['trajectory']
        self.stdout.write(self.style.SUCCESS(
            f"✓ Wrote {trajectory['n_samples']} x {trajectory['dim']} samples to {trajectory['path']}"
        ))
        self.stdout.write(f"  content hash {trajectory['content_hash'][:16]}")
