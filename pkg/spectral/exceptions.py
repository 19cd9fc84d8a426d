"""
Error hierarchy. Every error carries the process exit code the CLI uses.
"""


class KoopmanError(Exception):
    exit_code = 1

    def __init__(self, message, *, stage=None):
        super().__init__(message)
        self.stage = stage

    def __str__(self):
        message = super().__str__()
        if self.stage:
            return f"[{self.stage}] {message}"
        return message


class ConfigError(KoopmanError, ValueError):
    """Invalid configuration; ``keys`` lists every offending key."""
    exit_code = 2

    def __init__(self, message, *, keys=(), stage=None):
        super().__init__(message, stage=stage)
        self.keys = tuple(keys)


class ArtifactError(KoopmanError):
    """Unreadable input files and missing stage outputs."""
    exit_code = 3


class NumericalError(KoopmanError, ValueError):
    exit_code = 4


class DynamicsError(NumericalError):
    pass


class KernelError(NumericalError):
    pass


class NormalizationError(NumericalError):
    pass


class SpectrumError(NumericalError):
    pass


class GalerkinError(NumericalError):
    pass
