"""Fixed-size slotted pages.

On-disk page layout (little-endian), header then body:

    0   u16  file_id        (always 0 in v1; single data file)
    2   u32  page_no
    6   u64  page_lsn       LSN of the last log record applied to this page
    14  u8   page_type
    15  u8   flags          bit0: leaf node (tree pages only)
    16  u16  slot_count
    18  u32  owner_root     root page of the owning tree (0 for non-tree pages)
    22  u16  reserved
    24  u32  crc32          over bytes [0:24] + body
    28  ...  slot directory: slot_count x (u16 offset, u16 length)
    ...      free space (zeroed)
    ...      row data packed against the page end, slot 0 highest

Pages are kept canonical: rows are stored compacted in slot order from the
page end downward and all free space is zero.  Two pages with equal header
fields and equal ordered row lists therefore serialize to identical bytes,
which is what makes log-driven rewind byte-exact against forward images.

A never-written page is all zero bytes; readers treat it as a free page with
page_lsn 0.
"""

import struct
import zlib

from .errors import ChecksumMismatch

HEADER_SIZE = 28
HEADER = struct.Struct("<HIQBBHIH")  # file_id, page_no, page_lsn, type, flags, slots, owner, reserved
SLOT = struct.Struct("<HH")

# page types
PT_FREE = 0
PT_BTREE_LEAF = 1
PT_BTREE_INTERNAL = 2
PT_ALLOC_MAP = 3
PT_CATALOG = 4

FLAG_LEAF = 0x01

MIN_PAGE_SIZE = 512
MAX_PAGE_SIZE = 65536  # slot offsets are u16


class Page:
    """Decoded page: header fields plus an ordered list of row byte strings."""

    __slots__ = ("page_no", "page_lsn", "page_type", "is_leaf", "owner_root",
                 "rows", "_keys")

    def __init__(self, page_no, page_lsn=0, page_type=PT_FREE, is_leaf=False,
                 owner_root=0, rows=None):
        self.page_no = page_no
        self.page_lsn = page_lsn
        self.page_type = page_type
        self.is_leaf = is_leaf
        self.owner_root = owner_root
        self.rows = rows if rows is not None else []
        self._keys = None  # lazily derived sort keys for tree pages

    # -- state ---------------------------------------------------------

    def clone(self) -> "Page":
        p = Page(self.page_no, self.page_lsn, self.page_type, self.is_leaf,
                 self.owner_root, list(self.rows))
        return p

    def bytes_used(self) -> int:
        return HEADER_SIZE + 4 * len(self.rows) + sum(len(r) for r in self.rows)

    def fits(self, extra_row_len: int, page_size: int) -> bool:
        return self.bytes_used() + 4 + extra_row_len <= page_size

    def is_zero(self) -> bool:
        return self.page_lsn == 0 and self.page_type == PT_FREE and not self.rows

    # -- mutations (callers log first, then apply) ----------------------

    def insert_row(self, slot: int, row: bytes) -> None:
        self.rows.insert(slot, row)
        self._keys = None

    def delete_row(self, slot: int) -> bytes:
        row = self.rows.pop(slot)
        self._keys = None
        return row

    def replace_row(self, slot: int, row: bytes) -> bytes:
        old = self.rows[slot]
        self.rows[slot] = row
        self._keys = None
        return old

    def format(self, page_type: int, is_leaf: bool, owner_root: int) -> None:
        self.page_type = page_type
        self.is_leaf = is_leaf
        self.owner_root = owner_root
        self.rows = []
        self._keys = None

    def zero(self) -> None:
        self.page_type = PT_FREE
        self.is_leaf = False
        self.owner_root = 0
        self.page_lsn = 0
        self.rows = []
        self._keys = None

    def keys(self):
        """Per-row sort keys (length-prefixed key extracted); cached."""
        if self._keys is None:
            self._keys = [r[2:2 + int.from_bytes(r[:2], "little")] for r in self.rows]
        return self._keys

    # -- serialization ---------------------------------------------------

    def to_bytes(self, page_size: int) -> bytes:
        buf = bytearray(page_size)
        flags = FLAG_LEAF if self.is_leaf else 0
        HEADER.pack_into(buf, 0, 0, self.page_no, self.page_lsn, self.page_type,
                         flags, len(self.rows), self.owner_root, 0)
        end = page_size
        off = HEADER_SIZE
        for row in self.rows:
            start = end - len(row)
            buf[start:end] = row
            SLOT.pack_into(buf, off, start, len(row))
            off += 4
            end = start
        if off > end:
            raise ValueError(f"page {self.page_no} overflows: {self.bytes_used()} > {page_size}")
        crc = zlib.crc32(buf[:24])
        crc = zlib.crc32(buf[HEADER_SIZE:], crc)
        struct.pack_into("<I", buf, 24, crc)
        return bytes(buf)


_ZERO_CACHE = {}


def zero_page_bytes(page_size: int) -> bytes:
    b = _ZERO_CACHE.get(page_size)
    if b is None:
        b = bytes(page_size)
        _ZERO_CACHE[page_size] = b
    return b


def from_bytes(buf: bytes, page_no: int, verify: bool = True) -> Page:
    """Decode a page image; an all-zero buffer decodes to a free page."""
    if buf == zero_page_bytes(len(buf)):
        return Page(page_no)
    (_fid, stored_no, page_lsn, ptype, flags, nslots, owner, _rsv) = HEADER.unpack_from(buf, 0)
    if verify:
        stored_crc = struct.unpack_from("<I", buf, 24)[0]
        crc = zlib.crc32(buf[:24])
        crc = zlib.crc32(buf[HEADER_SIZE:], crc)
        if crc != stored_crc:
            raise ChecksumMismatch(f"page {page_no}: crc {crc:#x} != stored {stored_crc:#x}")
        if stored_no != page_no:
            raise ChecksumMismatch(f"page {page_no}: header says page {stored_no}")
    rows = []
    off = HEADER_SIZE
    size = len(buf)
    for _ in range(nslots):
        start, length = SLOT.unpack_from(buf, off)
        off += 4
        if start < HEADER_SIZE or start + length > size:
            raise ChecksumMismatch(f"page {page_no}: slot out of bounds")
        rows.append(bytes(buf[start:start + length]))
    return Page(page_no, page_lsn, ptype, bool(flags & FLAG_LEAF), owner, rows)
