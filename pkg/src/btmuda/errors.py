"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code, so library code should raise the most
specific type it can.
"""


class BtmudaError(Exception):
    """Base class for all package errors."""


class ConfigError(BtmudaError):
    """Invalid configuration value, unknown key, or shape/table mismatch."""

    exit_code = 2


class DataError(BtmudaError):
    """Missing, corrupt, or structurally invalid dataset content."""

    exit_code = 3


class CheckpointError(BtmudaError):
    """Unreadable checkpoint file (bad magic, truncation, bad version)."""

    exit_code = 3


class NumericError(BtmudaError):
    """NaN/Inf produced by a primitive, or a loss went non-finite."""

    exit_code = 4


class MissingLabelsError(DataError):
    """An operation that needs ground-truth labels received none."""

    exit_code = 5


class ContractViolation(BtmudaError):
    """A caller broke an operation precondition (shapes, indices, modes)."""

    exit_code = 2


class GradCheckFailure(BtmudaError):
    """Analytic gradients disagreed with finite differences beyond tolerance."""

    exit_code = 6
