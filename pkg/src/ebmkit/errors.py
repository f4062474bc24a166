"""Exception types shared across the package."""


class EbmKitError(Exception):
    """Base class for all ebmkit errors."""


class SchemaError(EbmKitError):
    """Schema definition or schema/data mismatch problems."""


class DataError(EbmKitError):
    """Bad cell values, degenerate columns, unusable labels."""


class ConfigError(EbmKitError):
    """Invalid configuration values."""


class ModelFormatError(EbmKitError):
    """Unreadable, truncated, or version-incompatible model files."""


class MetricError(EbmKitError):
    """Evaluation inputs that make a metric undefined."""
