"""Primary data file, page cache, and per-page latches.

Data file layout: a header page at offset 0 (magic, version, page size,
page count, all little-endian), then page N at offset N * page_size.
Page 0 is the header itself; real pages start at 1.

The cache is a fixed-capacity LRU of decoded pages.  Evicting a dirty page
first flushes the log through that page's LSN (the WAL rule enforcement
point), then writes the page.  Reads of never-written or beyond-EOF pages
yield zero pages; recovery relies on that.

Latching: readers share, writers exclusive, per page.  Latches cover single
page operations only and are never held across log flushes or faults of
other pages, so no latch ordering is needed.
"""

import os
import struct
import threading
from collections import OrderedDict

from .errors import PageOutOfRange, WalRuleViolation
from .page import Page, from_bytes, zero_page_bytes

FILE_MAGIC = b"CHRDBv1\0"
FILE_HDR = struct.Struct("<8sIIQ")  # magic, version, page_size, page_count


class RWLatch:
    """Shared/exclusive latch; no fairness guarantees (fine at page-op scope)."""

    __slots__ = ("_cond", "_readers", "_writer")

    def __init__(self):
        self._cond = threading.Condition(threading.Lock())
        self._readers = 0
        self._writer = False

    def acquire_shared(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def release_shared(self):
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_exclusive(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True

    def release_exclusive(self):
        with self._cond:
            self._writer = False
            self._cond.notify_all()


class _Frame:
    __slots__ = ("page", "dirty", "latch")

    def __init__(self, page):
        self.page = page
        self.dirty = False
        self.latch = RWLatch()


class PageStore:
    def __init__(self, path, page_size, wal, *, cache_pages=256, max_pages=None,
                 hooks=None):
        self.path = path
        self.page_size = page_size
        self.wal = wal
        self.cache_pages = cache_pages
        self.max_pages = max_pages
        self.hooks = hooks
        self._lock = threading.Lock()   # cache structure + file growth
        self._frames: OrderedDict[int, _Frame] = OrderedDict()
        self.file_pages = 0             # pages present in the file (excl. header)
        self.read_count = 0             # physical page reads
        self.write_count = 0
        self._fd = None

    # -- lifecycle ----------------------------------------------------------

    @classmethod
    def create(cls, path, page_size, wal, **kw):
        store = cls(path, page_size, wal, **kw)
        with open(path, "wb") as f:
            f.write(store._header_bytes(0))
            f.write(bytes(page_size - FILE_HDR.size))
        store._fd = os.open(path, os.O_RDWR)
        return store

    @classmethod
    def open(cls, path, wal, **kw):
        with open(path, "rb") as f:
            hdr = f.read(FILE_HDR.size)
        magic, version, page_size, _count = FILE_HDR.unpack(hdr)
        if magic != FILE_MAGIC:
            raise PageOutOfRange(f"{path}: not a chronodb data file")
        store = cls(path, page_size, wal, **kw)
        store._fd = os.open(path, os.O_RDWR)
        size = os.path.getsize(path)
        store.file_pages = max(0, size // page_size - 1)
        return store

    def _header_bytes(self, page_count):
        return FILE_HDR.pack(FILE_MAGIC, 1, self.page_size, page_count)

    def close(self):
        self.flush_pages_up_to(None)
        if self._fd is not None:
            os.pwrite(self._fd, self._header_bytes(self.file_pages), 0)
            os.close(self._fd)
            self._fd = None

    # -- frames --------------------------------------------------------------

    def frame(self, page_no: int) -> _Frame:
        """Fetch (faulting if needed) the cache frame for a page."""
        if page_no < 1 or page_no >= 2 ** 32:
            raise PageOutOfRange(f"page {page_no}")
        with self._lock:
            fr = self._frames.get(page_no)
            if fr is not None:
                self._frames.move_to_end(page_no)
                return fr
            page = self._read_from_file(page_no)
            fr = _Frame(page)
            self._frames[page_no] = fr
            while len(self._frames) > self.cache_pages:
                self._evict_one()
            return fr

    def _read_from_file(self, page_no):
        if page_no > self.file_pages:
            return Page(page_no)
        self.read_count += 1
        buf = os.pread(self._fd, self.page_size, page_no * self.page_size)
        if len(buf) < self.page_size:
            return Page(page_no)
        return from_bytes(buf, page_no)

    def _evict_one(self):
        for page_no, fr in self._frames.items():
            fr.latch.acquire_exclusive()
            try:
                if fr.dirty:
                    self._write_frame(page_no, fr)
                del self._frames[page_no]
                return
            finally:
                fr.latch.release_exclusive()

    def _write_frame(self, page_no, fr):
        # WAL rule: the log must be durable through this page's LSN first
        page = fr.page
        if page.page_lsn > self.wal.flushed_lsn:
            self.wal.flush_up_to(page.page_lsn)
            if page.page_lsn > self.wal.flushed_lsn:
                raise WalRuleViolation(
                    f"page {page_no} lsn {page.page_lsn} > flushed {self.wal.flushed_lsn}")
        img = page.to_bytes(self.page_size) if not page.is_zero() \
            else zero_page_bytes(self.page_size)
        if page_no > self.file_pages:
            # grow: zero-fill the gap so offsets stay page-aligned
            end = (self.file_pages + 1) * self.page_size
            gap = (page_no - self.file_pages - 1) * self.page_size
            if gap:
                os.pwrite(self._fd, bytes(gap), end)
            self.file_pages = page_no
            os.pwrite(self._fd, self._header_bytes(self.file_pages), 0)
        os.pwrite(self._fd, img, page_no * self.page_size)
        self.write_count += 1
        fr.dirty = False
        if self.hooks is not None and self.hooks.on_page_write is not None:
            self.hooks.on_page_write(page_no, img)

    # -- public page ops -------------------------------------------------------

    def read_page(self, page_no: int) -> Page:
        """Shared-latched copy of the current page."""
        fr = self.frame(page_no)
        fr.latch.acquire_shared()
        try:
            return fr.page.clone()
        finally:
            fr.latch.release_shared()

    def page_rows(self, page_no: int):
        """(page_type, is_leaf, owner_root, rows, page_lsn) under shared latch.
        Row byte strings are immutable, so sharing the list copy is safe."""
        fr = self.frame(page_no)
        fr.latch.acquire_shared()
        try:
            p = fr.page
            return p.page_type, p.is_leaf, p.owner_root, list(p.rows), p.page_lsn
        finally:
            fr.latch.release_shared()

    def write_page(self, page: Page) -> None:
        """Install a page image and write it through to the file (WAL rule
        enforced). Used by recovery and restore, not the normal path (which
        mutates frames in place and lets checkpoints/eviction flush)."""
        fr = self.frame(page.page_no)
        fr.latch.acquire_exclusive()
        try:
            fr.page = page
            fr.dirty = True
            self._write_frame(page.page_no, fr)
        finally:
            fr.latch.release_exclusive()

    def flush_pages_up_to(self, lsn=None) -> int:
        """Write every dirty cached page with page_lsn <= lsn (None = all).
        Returns the number of pages written."""
        wrote = 0
        with self._lock:
            items = list(self._frames.items())
        for page_no, fr in items:
            fr.latch.acquire_exclusive()
            try:
                if fr.dirty and (lsn is None or fr.page.page_lsn <= lsn):
                    self._write_frame(page_no, fr)
                    wrote += 1
            finally:
                fr.latch.release_exclusive()
        return wrote

    def dirty_count(self) -> int:
        with self._lock:
            return sum(1 for fr in self._frames.values() if fr.dirty)

    def max_known_page(self) -> int:
        with self._lock:
            cached = max(self._frames.keys(), default=0)
        return max(self.file_pages, cached)

    def drop_cache(self) -> None:
        """Flush and forget all cached frames (test aid)."""
        self.flush_pages_up_to(None)
        with self._lock:
            self._frames.clear()
