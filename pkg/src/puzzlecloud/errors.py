"""Exception hierarchy shared by every module of the package."""


class PuzzleCloudError(Exception):
    """Base class for all errors raised by puzzlecloud."""


class DimensionError(PuzzleCloudError, ValueError):
    pass


class EmptyCloudError(PuzzleCloudError, ValueError):
    pass


class LabelError(PuzzleCloudError, ValueError):
    pass


class ConfigError(PuzzleCloudError, ValueError):
    pass


class StateError(PuzzleCloudError, RuntimeError):
    pass


class NumericError(PuzzleCloudError, ArithmeticError):
    """Raised when an op produces NaN or Inf. ``op`` names the culprit."""

    def __init__(self, op, message=None):
        self.op = op
        super().__init__(message or f"non-finite values produced by '{op}'")


class DegenerateMeshError(PuzzleCloudError, ValueError):
    pass


class DegenerateCloudError(PuzzleCloudError, ValueError):
    pass


class ParseError(PuzzleCloudError, ValueError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class DomainError(PuzzleCloudError, ValueError):
    pass


class DatasetError(PuzzleCloudError, ValueError):
    pass


class LabelLeakageError(PuzzleCloudError, AttributeError):
    """A main-task label was read from a sample whose labels were stripped."""
