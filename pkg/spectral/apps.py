from django.apps import AppConfig


class SpectralConfig(AppConfig):
    name = 'spectral'
    verbose_name = 'Koopman spectral analysis'
