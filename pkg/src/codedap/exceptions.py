"""Exception types raised across the package."""


class InvalidConfigurationError(ValueError):
    """Non-physical camera or model configuration."""


class DegenerateKernelError(ValueError):
    """A kernel cannot be normalized because its mass is zero."""


class DegenerateCodeError(ValueError):
    """An aperture code that blocks all light."""


class DivisionGuardError(ArithmeticError):
    """Unregularized inverse filter hit an exact spectral zero."""


class InvalidDepthError(ValueError):
    """A depth sample that the thin-lens model cannot image.

    ``location`` holds the offending ``(row, col)``.
    """

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class TrainingStepError(RuntimeError):
    """A training step failed; ``state`` carries what is needed to reproduce it."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
