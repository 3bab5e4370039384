class ConfigError(ValueError):
    """Invalid experiment or simulation configuration."""


class LPSizeError(ValueError):
    """Capacity LP exceeds the configured variable limit."""


class InsufficientDataError(ValueError):
    """Too few completed tasks to compute a statistic."""
