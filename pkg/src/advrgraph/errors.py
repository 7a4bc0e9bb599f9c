"""Shared exception types; service and CLI map these onto status codes."""


class ModelLoadError(Exception):
    """Model weights or manifest could not be loaded / validated."""


class ConfigError(ValueError):
    """Invalid argument or run configuration (HTTP 422 / exit code 2)."""


class NotFoundError(KeyError):
    """Unknown artifact key, layer, or neuron (HTTP 404)."""


class UnsupportedLayerError(ConfigError):
    """Operation applied to a layer kind that does not support it."""


class MissingDependencyError(Exception):
    """A required upstream artifact or table entry is absent (exit code 3)."""
