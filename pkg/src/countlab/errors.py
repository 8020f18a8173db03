"""Exception types, mapped to process exit codes by the command line front end."""


class CountLabError(Exception):
    """Base for all errors raised by this package."""

    exit_code = 1


class UsageError(CountLabError):
    """Invalid arguments, configuration, or precondition violations."""

    exit_code = 1


class DataError(CountLabError):
    """Malformed or insufficient input data (files, pools, benchmarks)."""

    exit_code = 2


class DivergenceError(CountLabError):
    """Training produced a non-finite loss."""

    exit_code = 3
