from django.db import models

from .choices import RunStatus, SystemKind
from .managers import ExperimentManager, get_current_experiment
from .storage import ArrayJSONEncoder


class Experiment(models.Model):
    """One observed trajectory; runs and cached kernels belong to it."""
    name = models.CharField(max_length=255)
    system = models.CharField(max_length=32, choices=SystemKind.choices)
    trajectory_hash = models.CharField(max_length=64, unique=True)
    n_samples = models.PositiveIntegerField()
    dt = models.FloatField()
    created_at = models.DateTimeField(auto_now_add=True)

    def __str__(self):
        return f"{self.name} ({self.trajectory_hash[:12]})"

    class Meta:
        ordering = ('-created_at',)
        app_label = 'spectral'
        db_table = 'spectral_experiment'


class ExperimentScopedModel(models.Model):
    """
    Base for rows owned by an experiment; new rows pick up the current
    experiment when none is given.
    """
    experiment = models.ForeignKey(
        Experiment,
        on_delete=models.CASCADE,
        related_name='%(class)ss',
    )

    objects = ExperimentManager()

    def save(self, *args, **kwargs):
        if self.pk is None and self.experiment_id is None:
            experiment = get_current_experiment()
            if experiment is not None:
                self.experiment = experiment
        super().save(*args, **kwargs)

    class Meta:
        abstract = True


class Run(ExperimentScopedModel):
    """Manifest of one command invocation."""
    command = models.CharField(max_length=32)
    status = models.CharField(max_length=16, choices=RunStatus.choices, default=RunStatus.RUNNING)
    config = models.JSONField(encoder=ArrayJSONEncoder, default=dict)
    manifest = models.JSONField(encoder=ArrayJSONEncoder, default=dict)
    output_dir = models.CharField(max_length=1024)
    error = models.TextField(blank=True)
    started_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    def __str__(self):
        return f"{self.command} #{self.pk} ({self.status})"

    class Meta:
        ordering = ('-started_at',)
        app_label = 'spectral'
        db_table = 'spectral_run'


class KernelCacheEntry(ExperimentScopedModel):
    """Normalized Markov operator cached on disk, keyed by content hash."""
    key = models.CharField(max_length=64, unique=True)
    q = models.PositiveIntegerField()
    epsilon = models.FloatField()
    k_nn = models.PositiveIntegerField(null=True, blank=True)
    path = models.CharField(max_length=1024)
    hits = models.PositiveIntegerField(default=0)
    created_at = models.DateTimeField(auto_now_add=True)

    def __str__(self):
        return f"Q={self.q} eps={self.epsilon:g} ({self.key[:12]})"

    class Meta:
        verbose_name_plural = 'kernel cache entries'
        ordering = ('q',)
        app_label = 'spectral'
        db_table = 'spectral_kernel_cache'
