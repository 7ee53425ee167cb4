"""Exception hierarchy shared by every trajlab module."""


class TrajlabError(Exception):
    """Base class for all library errors."""


class ConfigError(TrajlabError, ValueError):
    """Invalid user-facing configuration (CLI exit code 2)."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ContractError(TrajlabError, ValueError):
    """A caller broke an operation's precondition (shapes, ranges)."""


class NumericError(TrajlabError, RuntimeError):
    """A run produced non-finite values."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message if step is None else f"step {step}: {message}")
