"""Optional instrumentation hooks.

The crash harness and the forward-replay image oracle attach here; the
production path leaves every callback None and pays nothing.
"""

from dataclasses import dataclass
from typing import Callable, Optional


@dataclass
class EngineHooks:
    on_append: Optional[Callable[[int], None]] = None          # lsn appended
    on_flush: Optional[Callable[[int], None]] = None           # flushed through lsn
    on_page_write: Optional[Callable[[int, bytes], None]] = None   # page_no, image
    on_master_write: Optional[Callable[[dict], None]] = None   # master record dict
    on_page_image: Optional[Callable[[int, int, "object"], None]] = None
    # forward capture: (lsn, page_no, Page) after each logged page mutation
