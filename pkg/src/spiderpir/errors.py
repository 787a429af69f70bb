"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so new failure modes should
reuse one of these families rather than raising bare ValueError.
"""


class ParameterError(ValueError):
    """An argument violates a documented precondition."""


class NotCoveredError(LookupError):
    """The requested element is not present in the multiset."""


class OracleTooLargeError(RuntimeError):
    """An exact enumeration was requested beyond the configured cap."""


class IntegrityError(RuntimeError):
    """Streamed or loaded data failed a structural check."""


class PhaseExhaustedError(RuntimeError):
    """A hint consumption was attempted after the phase budget was spent."""


class CoverageError(RuntimeError):
    """No unconsumed hint covers the requested index and no fallback exists."""


class PoolStateError(RuntimeError):
    """A hint pool operation violated the pool's state machine."""


class RefreshError(RuntimeError):
    """A phase refresh could not be completed; the old pool is unchanged."""


class FramingError(ValueError):
    """A wire frame could not be decoded."""


class DatabaseFormatError(RuntimeError):
    """A database file failed header or size validation."""


class PoolFormatError(RuntimeError):
    """A hint pool file failed header or layout validation."""


class NetworkError(OSError):
    """A transport operation failed at the socket level."""


class ProtocolError(RuntimeError):
    """The peer sent a well-framed but contract-violating response."""


class DuplicateKeyError(ValueError):
    """A key corpus contained repeated keys."""

    def __init__(self, duplicates: list[str]):
        self.duplicates = duplicates
        shown = ", ".join(repr(key) for key in duplicates[:10])
        suffix = "" if len(duplicates) <= 10 else f" (+{len(duplicates) - 10} more)"
        super().__init__(f"duplicate keys: {shown}{suffix}")
