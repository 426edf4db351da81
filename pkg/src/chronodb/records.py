"""Log record model: kinds, wire encoding, and page-action semantics.

Record wire format inside a segment (little-endian):

    u32 body_len | body | u32 crc32(body)

    body:
      0   u64 lsn
      8   u64 txn_id          0 = engine-internal bookkeeping records
      16  u64 prev_lsn        previous record of the same transaction (0 = none)
      24  u64 prev_page_lsn   previous record touching the same page (0 = chain start)
      32  u32 page_no         0 = record has no target page
      36  u16 file_id
      38  u8  kind
      39  u8  flags           bit0: system transaction (structure-only, undone physically)
      40  ... kind-specific payload

Every page-touching record reduces to one *page action* for redo and one for
undo.  Compensation records store both actions explicitly so they can be
replayed or reversed without consulting the record they compensate.  Full
page-image records (logged at reallocation, and optionally every Nth
modification) store the page as it was immediately before the record, which
lets rewind jump over whole chain regions.
"""

import struct

from .errors import CorruptRecord, UndoMismatch
from .page import Page, from_bytes as page_from_bytes

REC_HDR = struct.Struct("<QQQQIHBB")
REC_HDR_SIZE = 40

# record kinds
K_FORMAT = 1
K_PAGE_IMAGE = 2
K_INSERT = 3
K_DELETE = 4
K_UPDATE = 5
K_CLR = 6
K_TXN_BEGIN = 7
K_TXN_COMMIT = 8
K_TXN_ABORT_END = 9
K_ALLOC = 10
K_DEALLOC = 11
K_CKPT_BEGIN = 12
K_CKPT_END = 13

KIND_NAMES = {
    K_FORMAT: "format", K_PAGE_IMAGE: "page_image", K_INSERT: "insert",
    K_DELETE: "delete", K_UPDATE: "update", K_CLR: "clr",
    K_TXN_BEGIN: "txn_begin", K_TXN_COMMIT: "txn_commit",
    K_TXN_ABORT_END: "txn_abort_end", K_ALLOC: "alloc", K_DEALLOC: "dealloc",
    K_CKPT_BEGIN: "ckpt_begin", K_CKPT_END: "ckpt_end",
}

# page-image reasons
IMG_REALLOC = 1
IMG_PERIODIC = 2

FLAG_SYSTEM = 0x01

PAGE_RECORD_KINDS = frozenset(
    (K_FORMAT, K_PAGE_IMAGE, K_INSERT, K_DELETE, K_UPDATE, K_CLR, K_ALLOC, K_DEALLOC))
# kinds that bump the per-page modification counter toward periodic images
COUNTED_KINDS = frozenset((K_INSERT, K_DELETE, K_UPDATE, K_CLR, K_ALLOC, K_DEALLOC))
# kinds whose record pins a known full page state (rewind jump targets)
IMAGE_KINDS = frozenset((K_FORMAT, K_PAGE_IMAGE))


class LogRecord:
    __slots__ = ("lsn", "txn_id", "prev_lsn", "prev_page_lsn", "page_no",
                 "kind", "flags", "payload")

    def __init__(self, kind, txn_id=0, prev_lsn=0, prev_page_lsn=0, page_no=0,
                 payload=(), flags=0, lsn=0):
        self.lsn = lsn
        self.txn_id = txn_id
        self.prev_lsn = prev_lsn
        self.prev_page_lsn = prev_page_lsn
        self.page_no = page_no
        self.kind = kind
        self.flags = flags
        self.payload = payload  # decoded tuple, kind-specific

    @property
    def is_system(self) -> bool:
        return bool(self.flags & FLAG_SYSTEM)

    def __repr__(self):
        return (f"<rec {self.lsn} {KIND_NAMES.get(self.kind)} txn={self.txn_id} "
                f"page={self.page_no} prev={self.prev_lsn} prevPage={self.prev_page_lsn}>")


def page_chain_prev(record: LogRecord) -> int:
    """Back-link to the previous record touching the same page (0 = chain start)."""
    return record.prev_page_lsn


# --------------------------------------------------------------------------
# Page actions: the single-page mutation algebra shared by forward apply,
# redo, rewind, and rollback.

A_INSERT = 1     # (slot, row)
A_DELETE = 2     # (slot, expected_row)
A_REPLACE = 3    # (slot, before, after)
A_FORMAT = 4     # (page_type, is_leaf, owner_root)
A_ZERO = 5       # ()
A_INSTALL = 6    # (image_bytes,)
A_ALLOCBITS = 7  # (target_page_no, new_bits, expect_bits)
A_NOOP = 8       # ()


def encode_action(action) -> bytes:
    verb = action[0]
    if verb == A_INSERT or verb == A_DELETE:
        _, slot, row = action
        return struct.pack("<BHI", verb, slot, len(row)) + row
    if verb == A_REPLACE:
        _, slot, before, after = action
        return (struct.pack("<BHI", verb, slot, len(before)) + before
                + struct.pack("<I", len(after)) + after)
    if verb == A_FORMAT:
        _, ptype, leaf, owner = action
        return struct.pack("<BBBI", verb, ptype, 1 if leaf else 0, owner)
    if verb == A_INSTALL:
        _, img = action
        return struct.pack("<BI", verb, len(img)) + img
    if verb == A_ALLOCBITS:
        _, target, new_bits, expect = action
        return struct.pack("<BIBB", verb, target, new_bits, expect)
    if verb == A_ZERO or verb == A_NOOP:
        return struct.pack("<B", verb)
    raise ValueError(f"unknown action verb {verb}")


def decode_action(buf: bytes, off: int):
    verb = buf[off]
    off += 1
    if verb == A_INSERT or verb == A_DELETE:
        slot, n = struct.unpack_from("<HI", buf, off)
        off += 6
        return (verb, slot, bytes(buf[off:off + n])), off + n
    if verb == A_REPLACE:
        slot, n = struct.unpack_from("<HI", buf, off)
        off += 6
        before = bytes(buf[off:off + n])
        off += n
        (m,) = struct.unpack_from("<I", buf, off)
        off += 4
        return (verb, slot, before, bytes(buf[off:off + m])), off + m
    if verb == A_FORMAT:
        ptype, leaf, owner = struct.unpack_from("<BBI", buf, off)
        return (verb, ptype, bool(leaf), owner), off + 6
    if verb == A_INSTALL:
        (n,) = struct.unpack_from("<I", buf, off)
        off += 4
        return (verb, bytes(buf[off:off + n])), off + n
    if verb == A_ALLOCBITS:
        target, new_bits, expect = struct.unpack_from("<IBB", buf, off)
        return (verb, target, new_bits, expect), off + 6
    if verb == A_ZERO or verb == A_NOOP:
        return (verb,), off
    raise CorruptRecord(f"unknown action verb {verb}")


def invert_action(action, page_before: Page = None):
    """Exact inverse of a page action. ALLOCBITS/REPLACE invert from their
    own payload; INSERT/DELETE swap; FORMAT needs no prior state only when
    undone as ZERO (first-ever format)."""
    verb = action[0]
    if verb == A_INSERT:
        return (A_DELETE, action[1], action[2])
    if verb == A_DELETE:
        return (A_INSERT, action[1], action[2])
    if verb == A_REPLACE:
        return (A_REPLACE, action[1], action[3], action[2])
    if verb == A_ALLOCBITS:
        return (A_ALLOCBITS, action[1], action[3], action[2])
    raise ValueError(f"action {verb} has no payload-only inverse")


def apply_action(page: Page, action, page_size: int) -> Page:
    """Apply one action to a decoded page; may return a replacement Page
    object (INSTALL). Verifies expected prior state where the action carries
    it and raises UndoMismatch on disagreement."""
    verb = action[0]
    if verb == A_INSERT:
        _, slot, row = action
        if slot > len(page.rows):
            raise UndoMismatch(f"page {page.page_no}: insert slot {slot} > {len(page.rows)}")
        page.insert_row(slot, row)
        return page
    if verb == A_DELETE:
        _, slot, expected = action
        if slot >= len(page.rows) or page.rows[slot] != expected:
            raise UndoMismatch(f"page {page.page_no}: delete slot {slot} row mismatch")
        page.delete_row(slot)
        return page
    if verb == A_REPLACE:
        _, slot, before, after = action
        if slot >= len(page.rows) or page.rows[slot] != before:
            raise UndoMismatch(f"page {page.page_no}: replace slot {slot} prior-state mismatch")
        page.replace_row(slot, after)
        return page
    if verb == A_FORMAT:
        _, ptype, leaf, owner = action
        page.format(ptype, leaf, owner)
        return page
    if verb == A_ZERO:
        page.zero()
        return page
    if verb == A_INSTALL:
        return page_from_bytes(action[1], page.page_no)
    if verb == A_ALLOCBITS:
        _, target, new_bits, expect = action
        from .allocmap import set_bits, get_bits  # local import: avoid cycle
        cur = get_bits(page, target)
        if cur != expect:
            raise UndoMismatch(
                f"alloc map page {page.page_no}: bits for {target} are {cur:#x}, expected {expect:#x}")
        set_bits(page, target, new_bits)
        return page
    if verb == A_NOOP:
        return page
    raise CorruptRecord(f"unknown action verb {verb}")


# --------------------------------------------------------------------------
# Per-kind payload encoding.

def encode_payload(kind, payload) -> bytes:
    if kind == K_FORMAT:
        ptype, leaf, owner = payload
        return struct.pack("<BBI", ptype, 1 if leaf else 0, owner)
    if kind == K_PAGE_IMAGE:
        reason, ptype, leaf, owner, image = payload
        return struct.pack("<BBBII", reason, ptype, 1 if leaf else 0, owner, len(image)) + image
    if kind in (K_INSERT, K_DELETE):
        slot, row = payload
        return struct.pack("<HI", slot, len(row)) + row
    if kind == K_UPDATE:
        slot, before, after = payload
        return (struct.pack("<HI", slot, len(before)) + before
                + struct.pack("<I", len(after)) + after)
    if kind == K_CLR:
        undone_lsn, undo_next, redo_action, undo_action = payload
        ra = encode_action(redo_action)
        ua = encode_action(undo_action)
        return struct.pack("<QQ", undone_lsn, undo_next) + ra + ua
    if kind in (K_TXN_BEGIN, K_TXN_ABORT_END):
        return b""
    if kind in (K_TXN_COMMIT, K_CKPT_BEGIN):
        (micros,) = payload
        return struct.pack("<Q", micros)
    if kind == K_ALLOC:
        target, ptype, first_ever, before_bits, after_bits = payload
        return struct.pack("<IBBBB", target, ptype, 1 if first_ever else 0,
                           before_bits, after_bits)
    if kind == K_DEALLOC:
        target, before_bits, after_bits = payload
        return struct.pack("<IBB", target, before_bits, after_bits)
    if kind == K_CKPT_END:
        begin_lsn, max_txn_id, active = payload
        out = [struct.pack("<QQI", begin_lsn, max_txn_id, len(active))]
        for txn_id, last_lsn, first_lsn in active:
            out.append(struct.pack("<QQQ", txn_id, last_lsn, first_lsn))
        return b"".join(out)
    raise ValueError(f"unknown kind {kind}")


def decode_payload(kind, buf: bytes, off: int):
    if kind == K_FORMAT:
        ptype, leaf, owner = struct.unpack_from("<BBI", buf, off)
        return (ptype, bool(leaf), owner)
    if kind == K_PAGE_IMAGE:
        reason, ptype, leaf, owner, n = struct.unpack_from("<BBBII", buf, off)
        off += 11
        return (reason, ptype, bool(leaf), owner, bytes(buf[off:off + n]))
    if kind in (K_INSERT, K_DELETE):
        slot, n = struct.unpack_from("<HI", buf, off)
        off += 6
        return (slot, bytes(buf[off:off + n]))
    if kind == K_UPDATE:
        slot, n = struct.unpack_from("<HI", buf, off)
        off += 6
        before = bytes(buf[off:off + n])
        off += n
        (m,) = struct.unpack_from("<I", buf, off)
        off += 4
        return (slot, before, bytes(buf[off:off + m]))
    if kind == K_CLR:
        undone_lsn, undo_next = struct.unpack_from("<QQ", buf, off)
        off += 16
        redo_action, off = decode_action(buf, off)
        undo_action, off = decode_action(buf, off)
        return (undone_lsn, undo_next, redo_action, undo_action)
    if kind in (K_TXN_BEGIN, K_TXN_ABORT_END):
        return ()
    if kind in (K_TXN_COMMIT, K_CKPT_BEGIN):
        return struct.unpack_from("<Q", buf, off)
    if kind == K_ALLOC:
        target, ptype, first_ever, bb, ab = struct.unpack_from("<IBBBB", buf, off)
        return (target, ptype, bool(first_ever), bb, ab)
    if kind == K_DEALLOC:
        return struct.unpack_from("<IBB", buf, off)
    if kind == K_CKPT_END:
        begin_lsn, max_txn_id, n = struct.unpack_from("<QQI", buf, off)
        off += 20
        active = []
        for _ in range(n):
            active.append(struct.unpack_from("<QQQ", buf, off))
            off += 24
        return (begin_lsn, max_txn_id, active)
    raise CorruptRecord(f"unknown record kind {kind}")


def encode_record(rec: LogRecord) -> bytes:
    body = REC_HDR.pack(rec.lsn, rec.txn_id, rec.prev_lsn, rec.prev_page_lsn,
                        rec.page_no, 0, rec.kind, rec.flags)
    return body + encode_payload(rec.kind, rec.payload)


def decode_record(body: bytes) -> LogRecord:
    lsn, txn_id, prev_lsn, prev_page_lsn, page_no, _fid, kind, flags = \
        REC_HDR.unpack_from(body, 0)
    payload = decode_payload(kind, body, REC_HDR_SIZE)
    return LogRecord(kind, txn_id, prev_lsn, prev_page_lsn, page_no, payload,
                     flags, lsn)


# --------------------------------------------------------------------------
# Redo / undo semantics per kind.

def redo_action(rec: LogRecord):
    k = rec.kind
    if k == K_INSERT:
        return (A_INSERT, rec.payload[0], rec.payload[1])
    if k == K_DELETE:
        return (A_DELETE, rec.payload[0], rec.payload[1])
    if k == K_UPDATE:
        return (A_REPLACE, rec.payload[0], rec.payload[1], rec.payload[2])
    if k == K_FORMAT:
        ptype, leaf, owner = rec.payload
        return (A_FORMAT, ptype, leaf, owner)
    if k == K_PAGE_IMAGE:
        reason, ptype, leaf, owner, _image = rec.payload
        if reason == IMG_REALLOC:
            return (A_FORMAT, ptype, leaf, owner)
        return (A_NOOP,)
    if k == K_CLR:
        return rec.payload[2]
    if k == K_ALLOC:
        target, _pt, _fe, before_bits, after_bits = rec.payload
        return (A_ALLOCBITS, target, after_bits, before_bits)
    if k == K_DEALLOC:
        target, before_bits, after_bits = rec.payload
        return (A_ALLOCBITS, target, after_bits, before_bits)
    raise ValueError(f"record kind {k} has no page effect")


def undo_action(rec: LogRecord):
    """Exact physical inverse of the record's page effect."""
    k = rec.kind
    if k == K_INSERT:
        return (A_DELETE, rec.payload[0], rec.payload[1])
    if k == K_DELETE:
        return (A_INSERT, rec.payload[0], rec.payload[1])
    if k == K_UPDATE:
        return (A_REPLACE, rec.payload[0], rec.payload[2], rec.payload[1])
    if k == K_FORMAT:
        return (A_ZERO,)
    if k == K_PAGE_IMAGE:
        return (A_INSTALL, rec.payload[4])
    if k == K_CLR:
        return rec.payload[3]
    if k == K_ALLOC:
        target, _pt, _fe, before_bits, after_bits = rec.payload
        return (A_ALLOCBITS, target, before_bits, after_bits)
    if k == K_DEALLOC:
        target, before_bits, after_bits = rec.payload
        return (A_ALLOCBITS, target, before_bits, after_bits)
    raise ValueError(f"record kind {k} has no page effect")
