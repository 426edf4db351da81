"""Wall-clock sources.

Commit records and checkpoint records carry wall-clock timestamps that the
as-of resolution maps back to LSNs, so tests and the bench harness inject a
manual clock to make that mapping deterministic.
"""

import time
from datetime import datetime, timezone

# Base instant for manual clocks: an arbitrary fixed epoch well in the past
# of any test-generated timestamp arithmetic.
MANUAL_EPOCH_MICROS = int(datetime(2024, 1, 1, tzinfo=timezone.utc).timestamp() * 1_000_000)


class SystemClock:
    def now(self) -> int:
        return time.time_ns() // 1000


class ManualClock:
    """Deterministic clock advanced explicitly by the caller."""

    def __init__(self, start_micros: int = MANUAL_EPOCH_MICROS):
        self.micros = start_micros

    def now(self) -> int:
        return self.micros

    def advance(self, micros: int) -> int:
        self.micros += micros
        return self.micros


def parse_timestamp(text: str) -> int:
    """Parse 'YYYY-MM-DD HH:MM:SS.mmm' (fractional part optional) to UTC micros."""
    text = text.strip()
    fmt = "%Y-%m-%d %H:%M:%S.%f" if "." in text else "%Y-%m-%d %H:%M:%S"
    dt = datetime.strptime(text, fmt).replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1_000_000)


def format_timestamp(micros: int) -> str:
    dt = datetime.fromtimestamp(micros / 1_000_000, tz=timezone.utc)
    return dt.strftime("%Y-%m-%d %H:%M:%S.") + f"{(micros % 1_000_000) // 1000:03d}"
