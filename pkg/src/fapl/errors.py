"""Exception hierarchy shared by every module."""


class FaplError(Exception):
    """Base class; ``token`` is the machine-readable class name used by the CLI."""

    @property
    def token(self) -> str:
        return type(self).__name__


class ConfigError(FaplError, ValueError):
    pass


class ShapeError(FaplError, ValueError):
    pass


class InputError(FaplError, ValueError):
    pass


class NumericError(FaplError, ArithmeticError):
    pass


class ContractError(FaplError, RuntimeError):
    pass


class DivergenceError(FaplError, RuntimeError):
    pass


class ParseError(InputError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
