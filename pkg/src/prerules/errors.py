"""Exception types raised across the package."""


class PreError(Exception):
    """Base class for errors raised by prerules."""


class DataError(PreError, ValueError):
    """Malformed input data or schema."""


class UnseenLevelError(DataError):
    """A categorical value that was not present at training time."""

    def __init__(self, variable: str, level: str):
        super().__init__(f"unseen level {level!r} in column {variable!r}")
        self.variable = variable
        self.level = level


class ConvergenceError(PreError, RuntimeError):
    """Coordinate descent or IRLS did not converge."""

    def __init__(self, message: str, lambda_index: int | None = None):
        super().__init__(message)
        self.lambda_index = lambda_index


class ModelFormatError(PreError, ValueError):
    """A serialized model could not be read."""


class RuleSyntaxError(PreError, ValueError):
    """A rule expression could not be parsed."""


class FoldError(PreError):
    """A fit inside cross-validation failed; carries the (repeat, fold) position."""

    def __init__(self, repeat: int, fold: int, cause: Exception):
        super().__init__(f"repeat {repeat + 1}, fold {fold + 1}: {cause}")
        self.repeat = repeat
        self.fold = fold
