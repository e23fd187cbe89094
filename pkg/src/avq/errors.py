"""Exception hierarchy for the avq package."""


class AVQError(Exception):
    """Base class for all errors raised by avq."""


class ValidationError(AVQError, ValueError):
    """Input data violates a documented precondition (range, format, ...)."""


class DimensionError(AVQError, ValueError):
    """Array shapes do not agree with the model or with each other."""


class DegenerateInputError(AVQError, ValueError):
    """Statistic undefined for the given input (zero variance, too few samples)."""


class MediaError(AVQError):
    """Media file missing, unreadable, or misaligned."""


class TrainingError(AVQError, RuntimeError):
    """Optimization diverged (non-finite objective)."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ConvergenceError(AVQError, RuntimeError):
    """Iterative solver hit its iteration budget before reaching tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
