"""Allocation bitmap stored on ordinary logged pages.

Each map page holds one fixed-size bitmap row (slot 0), two bits per tracked
page: bit0 = allocated, bit1 = ever-allocated.  The ever-allocated bit is
monotone in the live database (cleared only by physical rewind): it decides
whether a fresh allocation logs a plain format record or a full prior-image
record linking to the page's previous incarnation.

Map page k tracks page numbers [k*C, (k+1)*C) where C = 4 * bitmap bytes.
The map page for range 0 is page 1 (page 0 is the data-file header); map
pages for later ranges sit at the first page number of their range.
"""

from .page import HEADER_SIZE, PT_ALLOC_MAP, Page

BIT_ALLOCATED = 0x1
BIT_EVER = 0x2

# pages never handed out by the allocator
RESERVED_PAGES = 2  # 0: file header, 1: first map page
CATALOG_ROOT = 2
CATALOG_FIRST_LEAF = 3


def bitmap_bytes(page_size: int) -> int:
    return page_size - HEADER_SIZE - 4  # one slot directory entry


def pages_per_map(page_size: int) -> int:
    return bitmap_bytes(page_size) * 4


def map_page_for(page_no: int, page_size: int) -> int:
    k = page_no // pages_per_map(page_size)
    return 1 if k == 0 else k * pages_per_map(page_size)


def range_start(map_page_no: int, page_size: int) -> int:
    return 0 if map_page_no == 1 else map_page_no


def fresh_bitmap(page_size: int) -> bytes:
    return bytes(bitmap_bytes(page_size))


def get_bits(map_page: Page, target_page_no: int) -> int:
    # the caller guarantees target lies in this map page's range; the range
    # width derives from the bitmap length, so no page-size argument needed
    per = len(map_page.rows[0]) * 4
    k = target_page_no // per
    idx = target_page_no - k * per
    byte = map_page.rows[0][idx >> 2]
    return (byte >> ((idx & 3) * 2)) & 0x3


def set_bits(map_page: Page, target_page_no: int, bits: int) -> None:
    per = len(map_page.rows[0]) * 4
    k = target_page_no // per
    idx = target_page_no - k * per
    row = bytearray(map_page.rows[0])
    shift = (idx & 3) * 2
    row[idx >> 2] = (row[idx >> 2] & ~(0x3 << shift)) | ((bits & 0x3) << shift)
    map_page.replace_row(0, bytes(row))


def scan_for_free(map_page: Page, page_size: int, limit_page_no=None):
    """Return (first reusable page_no, first never-allocated page_no) within
    this map page's range, skipping reserved and map pages. Either may be None."""
    bitmap = map_page.rows[0]
    per = len(bitmap) * 4
    start_no = range_start(map_page.page_no, page_size)
    reusable = fresh = None
    for idx in range(per):
        page_no = start_no + idx
        if page_no < RESERVED_PAGES or page_no == map_page.page_no:
            continue
        if limit_page_no is not None and page_no >= limit_page_no:
            break
        bits = (bitmap[idx >> 2] >> ((idx & 3) * 2)) & 0x3
        if bits & BIT_ALLOCATED:
            continue
        if bits & BIT_EVER:
            if reusable is None:
                reusable = page_no
                break  # reusable wins; no need to look further
        elif fresh is None:
            fresh = page_no
            if reusable is not None:
                break
    return reusable, fresh


def make_map_page(page_no: int, page_size: int) -> Page:
    p = Page(page_no, page_type=PT_ALLOC_MAP)
    p.rows = [fresh_bitmap(page_size)]
    return p
