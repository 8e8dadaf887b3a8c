"""Exception taxonomy shared across the toolkit.

The CLI maps these onto distinct exit codes (usage=1, data=2, provider=3)
so shell pipelines can tell a bad input file from a dead scoring service.
"""


class RelDataError(Exception):
    """Base class for all toolkit errors."""


class DataError(RelDataError):
    """Malformed or contradictory input data (corpus files, scored files)."""


class ConfigError(RelDataError):
    """Invalid configuration: bad thresholds, impossible k ranges, missing template fields."""


class ProviderError(RelDataError):
    """A model provider (translator, embedder, scorer) failed or returned garbage."""
