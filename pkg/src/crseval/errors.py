"""Exceptions shared across subsystems."""


class ConfigError(Exception):
    """A configuration file or value is missing, malformed, or inconsistent."""
