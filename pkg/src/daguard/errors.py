"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not line up."""


class StateError(RuntimeError):
    """An operation was called before its prerequisite (e.g. backward before forward)."""


class FormatError(ValueError):
    """A file on disk is malformed."""


class UnsupportedError(ValueError):
    """The operation does not apply to this kind of data."""
