"""Exception types shared across the toolkit.

Two families matter for the CLI exit codes: configuration problems
(bad flags, missing config keys, nonexistent paths) and data problems
(malformed corpora, alignment mismatches, broken model files).
"""


class DataselError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(DataselError):
    """Invalid configuration: unknown keys, bad values, missing paths."""


class DataError(DataselError):
    """Invalid or inconsistent input data."""
