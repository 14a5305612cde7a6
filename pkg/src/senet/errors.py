"""Exception hierarchy shared by every module."""


class SENetError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(SENetError, ValueError):
    pass


class NotSymmetric(SENetError, ValueError):
    pass


class InvalidSpec(SENetError, ValueError):
    pass


class NonzeroDiagonal(SENetError, ValueError):
    pass


class IsolatedVertex(SENetError, ValueError):
    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"vertex {self.index} has zero degree")


class ClassTooSmall(SENetError, ValueError):
    pass


class FormatError(SENetError, ValueError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class IoError(SENetError, OSError):
    pass
