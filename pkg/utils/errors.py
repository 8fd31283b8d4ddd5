# utils/errors.py
"""
Base exception for the graft toolkit.
Concrete error kinds live next to the code that raises them.
"""


class GraftError(Exception):
    """Root of every error raised by graft modules"""


class ConfigError(GraftError, ValueError):
    """Malformed settings file or invalid configuration value"""
