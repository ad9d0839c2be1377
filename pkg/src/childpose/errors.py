"""Exception hierarchy shared by every module."""


class ChildPoseError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(ChildPoseError, ValueError):
    pass


class BehindCameraError(InvalidInputError):
    pass


class UnderdeterminedError(ChildPoseError, ValueError):
    """Not enough distinct data to determine a model."""


class NoModelError(ChildPoseError, RuntimeError):
    """RANSAC found no consensus set large enough."""


class DimensionMismatchError(InvalidInputError):
    pass


class AmbiguousRoleError(ChildPoseError, ValueError):
    pass


class UnsupportedCardinalityError(ChildPoseError, ValueError):
    pass


class FormatError(ChildPoseError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
