"""Exception hierarchy shared across the toolkit.

Validation problems (bad arguments, bad config, bad matrices) derive from
ValueError and map to CLI exit code 1; numeric failures (divergence,
non-convergent series) derive from RuntimeError and map to exit code 2.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class DomainError(ToolkitError, ValueError):
    """Argument outside the documented domain of an operation."""


class ModelError(ToolkitError, ValueError):
    """System matrices violate the plant contract (shape, symmetry, definiteness)."""


class ConfigError(ToolkitError, ValueError):
    """Scenario configuration is invalid; carries the offending field name."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class NumericError(ToolkitError, RuntimeError):
    """A numeric procedure failed to reach its accuracy contract."""


class DivergenceError(NumericError):
    """An iteration diverged or failed to converge within its budget."""
