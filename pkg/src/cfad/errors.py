"""Exception taxonomy shared by the library and the CLI.

Four categories map to CLI exit codes: configuration problems, file I/O
and format problems, numeric failures, and shape/config mismatches.
"""


class CfadError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(CfadError):
    """Invalid configuration value, unknown key, or failed validation."""

    exit_code = 2


class DataFormatError(CfadError):
    """Corrupt, truncated, or wrong-version dataset/model file."""

    exit_code = 3


class NumericError(CfadError):
    """Numeric failure: divergence, non-convergence, non-finite loss."""

    exit_code = 4


class MismatchError(CfadError):
    """Dimension or model/dataset configuration mismatch."""

    exit_code = 5


class PlacementError(CfadError):
    """Node placement constraints could not be satisfied."""

    exit_code = 4
