"""
Experiment-scoped managers and querysets for automatic experiment filtering.

The current experiment lives in thread-local storage, so pipeline
invocations running in different threads never see each other's rows.
"""
from contextlib import contextmanager
from threading import local

from django.db import models
from django.db.models import QuerySet


# Thread-local storage for the current experiment
_thread_locals = local()

SCOPE_KEYS = ('experiment', 'experiment_id', 'experiment__id')


def get_current_experiment():
    """Get the current experiment from thread-local storage."""
    return getattr(_thread_locals, 'experiment', None)


def set_current_experiment(experiment):
    """Set the current experiment in thread-local storage."""
    _thread_locals.experiment = experiment


def clear_current_experiment():
    """Clear the current experiment from thread-local storage."""
    if hasattr(_thread_locals, 'experiment'):
        delattr(_thread_locals, 'experiment')


@contextmanager
def experiment_scope(experiment):
    """Scope every experiment-bound query in this thread to ``experiment``."""
    previous = get_current_experiment()
    set_current_experiment(experiment)
    try:
        yield experiment
    finally:
        if previous is None:
            clear_current_experiment()
        else:
            set_current_experiment(previous)


def _explicitly_scoped(kwargs):
    return any(key in kwargs for key in SCOPE_KEYS)


class ExperimentQuerySet(QuerySet):
    """
    QuerySet that filters by the current experiment.
    """

    def _filter_by_experiment(self):
        experiment = get_current_experiment()
        if experiment is None:
            return self
        return self.filter(experiment=experiment)

    def all(self):
        return super().all()._filter_by_experiment()

    def filter(self, *args, **kwargs):
        result = super().filter(*args, **kwargs)
        if _explicitly_scoped(kwargs):
            return result
        return result._filter_by_experiment()

    def get(self, *args, **kwargs):
        experiment = get_current_experiment()
        if experiment is not None and not _explicitly_scoped(kwargs):
            kwargs['experiment'] = experiment
        return super().get(*args, **kwargs)

    def create(self, **kwargs):
        experiment = get_current_experiment()
        if experiment is not None and not _explicitly_scoped(kwargs):
            kwargs['experiment'] = experiment
        return super().create(**kwargs)

    def update(self, **kwargs):
        if _explicitly_scoped(kwargs):
            raise ValueError('Rows cannot be moved between experiments through update().')
        return super().update(**kwargs)


class ExperimentManager(models.Manager.from_queryset(ExperimentQuerySet)):
    """
    Manager whose querysets are scoped to the current experiment.
    """

    def all(self):
        return self.get_queryset().all()
