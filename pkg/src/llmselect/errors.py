"""Shared exception base so the CLI can map failures to exit codes."""


class LlmSelectError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(LlmSelectError):
    """Bad configuration or usage; mapped to exit code 2."""
