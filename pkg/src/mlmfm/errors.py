"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MLMFMError(Exception):
    """Base class for every error raised by this package."""


class PanelError(MLMFMError, ValueError):
    """Malformed grouped panel (shapes, non-finite values, too few groups)."""


class NonFiniteError(MLMFMError, ValueError):
    pass


class RankDeficientError(MLMFMError, ValueError):
    pass


class DegenerateSpectrumError(MLMFMError, ValueError):
    pass


class DegenerateSeriesError(MLMFMError, ValueError):
    pass


class ConfigError(MLMFMError, ValueError):
    pass


class IngestError(MLMFMError, ValueError):
    pass


class ConditioningWarning(UserWarning):
    """Least-squares system is close to singular."""
