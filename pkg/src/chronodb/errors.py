"""Engine exception hierarchy.

Errors fall in three bands: caller mistakes (NoSuchTable, DuplicateKey, ...),
environmental limits (OutOfSpace, LogFull, RetentionExceeded, ...), and
invariant violations that indicate an engine bug and must fail fast
(WalRuleViolation, UndoMismatch).
"""


class EngineError(Exception):
    """Base class for all chronodb errors."""


class EngineClosed(EngineError):
    pass


class ChecksumMismatch(EngineError):
    pass


class PageOutOfRange(EngineError):
    pass


class WalRuleViolation(EngineError):
    """A page image would reach durable storage ahead of its log. Engine bug."""


class LogFull(EngineError):
    """Log disk budget exhausted and retention forbids truncation."""


class TruncatedLsn(EngineError):
    """Requested log record is older than the truncation horizon."""


class CorruptRecord(EngineError):
    pass


class SnapshotDropped(EngineError):
    pass


class RetentionExceeded(EngineError):
    """Requested as-of point is older than the retention window allows."""


class FutureTime(EngineError):
    """Requested as-of point lies beyond the flushed log."""


class UndoMismatch(EngineError):
    """Undo applied to an unexpected page state. Engine bug."""


class DuplicateTable(EngineError):
    pass


class NoSuchTable(EngineError):
    pass


class DuplicateKey(EngineError):
    pass


class NoSuchKey(EngineError):
    pass


class LockTimeout(EngineError):
    pass


class OutOfSpace(EngineError):
    pass


class RowTooLarge(EngineError):
    pass


class BaselineGap(EngineError):
    """Backup and retained log do not overlap; cannot roll forward."""
