"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes of inputs do not agree with each other or with a config."""


class ConfigError(ValueError):
    """An invalid or inconsistent configuration value."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where finite values are required."""


class FormatError(ValueError):
    """A file does not follow the expected binary layout."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
