"""Exception types shared across the package.

The CLI maps ``ConfigError`` to exit code 2 and ``NumericError`` /
``FormatError`` to exit code 3.
"""


class ConfigError(ValueError):
    """Invalid configuration or operation parameters."""


class ContractError(ValueError):
    """An input violated an operation's precondition (shapes, masks, state)."""


class FormatError(ValueError):
    """A binary file could not be decoded."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(RuntimeError):
    """Training produced non-finite values."""
