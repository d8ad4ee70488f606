"""Exception types shared across the package."""


class DimensionError(ValueError):
    """An array argument has the wrong shape or width."""


class ConfigurationError(ValueError):
    """A structural parameter (coarsening factor, tolerance, ...) is invalid."""


class ProtocolError(RuntimeError):
    """Boundary-message exchange violated the one-message-per-edge protocol."""


class IdxParseError(ValueError):
    """An IDX file failed validation; ``offset`` is the failing byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset
