"""Package-level exception types, mapped to CLI exit codes in one place."""


class DataError(Exception):
    """Missing, malformed, or inconsistent input data (exit code 3)."""


class NumericError(Exception):
    """A computation produced non-finite values it cannot recover from (exit code 4)."""
