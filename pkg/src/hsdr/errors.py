"""Exception hierarchy shared by every hsdr module."""


class HsdrError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class InvalidInput(HsdrError, ValueError):
    exit_code = 2


class InvalidSpec(InvalidInput):
    pass


class ConfigError(InvalidInput):
    exit_code = 2


class NumericalFailure(HsdrError, ArithmeticError):
    exit_code = 3


class DegenerateData(NumericalFailure):
    pass


class DegenerateScores(DegenerateData):
    pass


class InvalidTarget(InvalidInput):
    pass


class MissingClass(InvalidInput):
    def __init__(self, missing):
        self.missing = sorted(int(c) for c in missing)
        super().__init__(f"classes absent from the training sample: {self.missing}")


class FormatError(HsdrError, ValueError):
    """Malformed binary file. ``offset`` is the byte offset of the problem."""

    exit_code = 4

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class HsdrIOError(HsdrError, OSError):
    exit_code = 4

    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__(f"{path}: {reason}")


class NotConvergedWarning(UserWarning):
    pass


class DegenerateColumnWarning(UserWarning):
    pass
