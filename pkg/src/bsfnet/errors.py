"""Exception types raised across the package."""

from .tensor import DimensionError


class BsfError(Exception):
    """Base class for package errors."""


class ConfigurationError(BsfError, ValueError):
    pass


class InputError(BsfError, ValueError):
    pass


class StateError(BsfError, RuntimeError):
    pass


class DivergenceError(BsfError, RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class PruningError(BsfError, ValueError):
    pass


class SelectionError(BsfError, ValueError):
    pass


class FormatError(BsfError, ValueError):
    pass


class ParseError(BsfError, ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.column = column


__all__ = [
    "BsfError", "ConfigurationError", "DimensionError", "DivergenceError", "FormatError",
    "InputError", "ParseError", "PruningError", "SelectionError", "StateError",
]
