"""
Enumerations shared by the numerical modules and the models.
"""
from django.db import models


class SystemKind(models.TextChoices):
    FAYAD_TORUS_PRODUCT = 'fayad_torus_product', 'Fayad torus x rotation'
    L63_PRODUCT = 'l63_product', 'Lorenz 63 x rotation'
    L63_PURE = 'l63_pure', 'Lorenz 63'
    CIRCLE_ROTATION = 'circle_rotation', 'Circle rotation'
    EXTERNAL = 'external', 'External data'


class CouplingMap(models.TextChoices):
    """Observation map selector for the product systems."""
    ADDITIVE = 'additive', 'Additive coupling'
    NONLINEAR = 'nonlinear', 'Nonlinear coupling'
    IDENTITY = 'identity', 'Identity'
    CIRCLE = 'circle', 'Circle embedding'


class FDOrder(models.TextChoices):
    FIRST_FORWARD = 'first_forward', 'First-order forward difference'
    SECOND_CENTRAL = 'second_central', 'Second-order central difference'


class RunStatus(models.TextChoices):
    RUNNING = 'running', 'Running'
    SUCCEEDED = 'succeeded', 'Succeeded'
    FAILED = 'failed', 'Failed'
