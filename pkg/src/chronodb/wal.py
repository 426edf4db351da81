"""Append-only transaction log with dual chaining and bounded retention.

Physical layout: a directory of fixed-capacity segment files named by their
first LSN (`00000000000000000001.wal`).  Segment format:

    header: u32 magic 'CWA1' | u32 version | u64 first_lsn
    then length-prefixed CRC'd records (see records.py)

Truncation deletes whole segments strictly below the horizon, so retention
cost is file deletion.  A prefix of the log cut at any record boundary
parses cleanly; a torn final record is detected by length/CRC and dropped.

The WAL also maintains in-memory indexes rebuilt by one sequential scan at
open and updated on append:

  * lsn -> (segment, byte offset) for random record reads,
  * commit timestamps (non-decreasing) for wall-clock -> LSN resolution,
  * checkpoint-begin positions for analysis anchoring,
  * per-page LSNs of full-image records, so page rewind can jump straight
    to the nearest image above the target instead of walking the chain,
  * per-page modification counts since the last full image, driving the
    optional every-Nth-modification image emission.
"""

import os
import struct
import threading
import zlib
from bisect import bisect_left, bisect_right

from .errors import CorruptRecord, LogFull, TruncatedLsn
from .records import (COUNTED_KINDS, IMAGE_KINDS, K_CKPT_BEGIN, K_TXN_COMMIT,
                      LogRecord, decode_record, encode_record)

SEG_MAGIC = 0x31415743  # 'CWA1'
SEG_HDR = struct.Struct("<IIQ")
SEG_HDR_SIZE = 16
DEFAULT_SEGMENT_BYTES = 16 * 1024 * 1024


def _seg_name(first_lsn: int) -> str:
    return f"{first_lsn:020d}.wal"


class _Segment:
    __slots__ = ("first_lsn", "path", "durable_size", "buffer", "buf_offsets",
                 "buffered_bytes")

    def __init__(self, first_lsn, path, durable_size):
        self.first_lsn = first_lsn
        self.path = path
        self.durable_size = durable_size   # bytes on disk
        self.buffer = []                   # encoded frames not yet written
        self.buf_offsets = []              # absolute offset of each buffered frame
        self.buffered_bytes = 0

    @property
    def size(self):
        return self.durable_size + self.buffered_bytes


class Wal:
    def __init__(self, directory, *, segment_bytes=DEFAULT_SEGMENT_BYTES,
                 fsync=False, log_budget_bytes=None, hooks=None):
        self.dir = directory
        self.segment_bytes = segment_bytes
        self.fsync = fsync
        self.log_budget_bytes = log_budget_bytes
        self.hooks = hooks

        self._tail_lock = threading.Lock()    # serializes appends
        self._flush_lock = threading.Lock()   # one flusher at a time

        self.last_lsn = 0
        self.flushed_lsn = 0
        self.horizon = 1                       # smallest readable LSN
        self.flush_calls = 0                   # physical flushes performed

        self.segments: list[_Segment] = []
        self._by_first: dict[int, _Segment] = {}
        self._offsets: dict[int, tuple[int, int]] = {}   # lsn -> (first_lsn, offset)
        self._fds: dict[int, int] = {}                   # first_lsn -> read fd

        # rebuildable indexes
        self.commit_times: list[int] = []      # parallel arrays, ascending lsn
        self.commit_lsns: list[int] = []
        self.checkpoint_times: list[int] = []
        self.checkpoint_lsns: list[int] = []
        self.image_lsns: dict[int, list[int]] = {}       # page_no -> ascending lsns
        self.mods_since_image: dict[int, int] = {}
        self.total_bytes = 0

    # -- lifecycle -------------------------------------------------------

    @classmethod
    def create(cls, directory, **kw):
        os.makedirs(directory, exist_ok=True)
        wal = cls(directory, **kw)
        wal._start_segment(1)
        return wal

    @classmethod
    def open(cls, directory, **kw):
        wal = cls(directory, **kw)
        names = sorted(n for n in os.listdir(directory) if n.endswith(".wal"))
        for name in names:
            path = os.path.join(directory, name)
            first_lsn = int(name.split(".")[0])
            seg = _Segment(first_lsn, path, os.path.getsize(path))
            wal.segments.append(seg)
            wal._by_first[first_lsn] = seg
        if not wal.segments:
            wal._start_segment(1)
            return wal
        wal.horizon = wal.segments[0].first_lsn
        wal._rescan()
        return wal

    def close(self):
        self.flush_up_to(self.last_lsn)
        for fd in self._fds.values():
            os.close(fd)
        self._fds.clear()

    def _start_segment(self, first_lsn):
        path = os.path.join(self.dir, _seg_name(first_lsn))
        with open(path, "wb") as f:
            f.write(SEG_HDR.pack(SEG_MAGIC, 1, first_lsn))
        seg = _Segment(first_lsn, path, SEG_HDR_SIZE)
        self.segments.append(seg)
        self._by_first[first_lsn] = seg
        self.total_bytes += SEG_HDR_SIZE

    def _rescan(self):
        """Rebuild all in-memory indexes from segment files; physically trim a
        torn tail so appends continue at a clean boundary."""
        last_good = 0
        for si, seg in enumerate(self.segments):
            with open(seg.path, "rb") as f:
                data = f.read()
            if len(data) < SEG_HDR_SIZE:
                raise CorruptRecord(f"segment {seg.path} shorter than header")
            magic, _version, first = SEG_HDR.unpack_from(data, 0)
            if magic != SEG_MAGIC or first != seg.first_lsn:
                raise CorruptRecord(f"segment {seg.path} bad header")
            off = SEG_HDR_SIZE
            good_end = off
            while off + 4 <= len(data):
                (n,) = struct.unpack_from("<I", data, off)
                end = off + 4 + n + 4
                if end > len(data):
                    break  # torn tail
                body = data[off + 4:off + 4 + n]
                (crc,) = struct.unpack_from("<I", data, off + 4 + n)
                if zlib.crc32(body) != crc:
                    break  # torn/corrupt tail record
                rec = decode_record(body)
                self._index_record(rec, seg.first_lsn, off)
                last_good = rec.lsn
                good_end = end
                off = end
            if good_end < len(data):
                if si != len(self.segments) - 1:
                    raise CorruptRecord(
                        f"corrupt record mid-log in {seg.path} at offset {good_end}")
                with open(seg.path, "r+b") as f:
                    f.truncate(good_end)
            seg.durable_size = good_end
            self.total_bytes += good_end
        self.last_lsn = last_good
        self.flushed_lsn = last_good

    def _index_record(self, rec, seg_first, off):
        self._offsets[rec.lsn] = (seg_first, off)
        k = rec.kind
        if rec.page_no:
            if k in IMAGE_KINDS:
                self.image_lsns.setdefault(rec.page_no, []).append(rec.lsn)
                self.mods_since_image[rec.page_no] = 0
            elif k in COUNTED_KINDS:
                self.mods_since_image[rec.page_no] = \
                    self.mods_since_image.get(rec.page_no, 0) + 1
        elif k == K_TXN_COMMIT:
            self.commit_times.append(rec.payload[0])
            self.commit_lsns.append(rec.lsn)
        elif k == K_CKPT_BEGIN:
            self.checkpoint_times.append(rec.payload[0])
            self.checkpoint_lsns.append(rec.lsn)

    # -- append / flush ----------------------------------------------------

    def append(self, rec: LogRecord) -> int:
        """Assign the next LSN, buffer the encoded record, index it.
        Durable only after flush_up_to."""
        with self._tail_lock:
            if self.log_budget_bytes is not None and self.total_bytes > self.log_budget_bytes:
                raise LogFull(f"log exceeds budget of {self.log_budget_bytes} bytes")
            rec.lsn = self.last_lsn + 1
            body = encode_record(rec)
            frame = struct.pack("<I", len(body)) + body + struct.pack("<I", zlib.crc32(body))
            seg = self.segments[-1]
            if seg.size + len(frame) > self.segment_bytes and seg.size > SEG_HDR_SIZE:
                self._write_out(seg)
                self._start_segment(rec.lsn)
                seg = self.segments[-1]
            self._index_record(rec, seg.first_lsn, seg.size)
            seg.buf_offsets.append(seg.size)
            seg.buffer.append(frame)
            seg.buffered_bytes += len(frame)
            self.total_bytes += len(frame)
            self.last_lsn = rec.lsn
            if self.hooks is not None and self.hooks.on_append is not None:
                self.hooks.on_append(rec.lsn)
            return rec.lsn

    def flush_up_to(self, lsn: int) -> None:
        """Make all records with LSN <= lsn durable; a single physical flush
        may satisfy several concurrent committers (group commit)."""
        if lsn <= self.flushed_lsn:
            return
        with self._flush_lock:
            if lsn <= self.flushed_lsn:
                return
            with self._tail_lock:
                target = self.last_lsn
                self.flush_calls += 1
                for seg in self.segments:
                    self._write_out(seg)
            self.flushed_lsn = max(self.flushed_lsn, target)
            if self.hooks is not None and self.hooks.on_flush is not None:
                self.hooks.on_flush(self.flushed_lsn)

    def _write_out(self, seg):
        # caller holds the tail lock, making buffer drain + size advance atomic
        # with respect to readers
        if seg.buffer:
            data = b"".join(seg.buffer)
            seg.buffer = []
            seg.buf_offsets = []
            with open(seg.path, "ab") as f:
                f.write(data)
                if self.fsync:
                    f.flush()
                    os.fsync(f.fileno())
            seg.durable_size += len(data)
            seg.buffered_bytes = 0

    # -- reads -------------------------------------------------------------

    def read(self, lsn: int) -> LogRecord:
        """Read a flushed record by LSN (public contract: readers never see
        unflushed log)."""
        if lsn > self.flushed_lsn:
            raise CorruptRecord(f"lsn {lsn} beyond flushed log ({self.flushed_lsn})")
        return self.read_any(lsn)

    def read_any(self, lsn: int) -> LogRecord:
        """Engine-internal read: also serves appended-but-unflushed records
        (rollback walks its own transaction's tail)."""
        if lsn < self.horizon:
            raise TruncatedLsn(f"lsn {lsn} below horizon {self.horizon}")
        loc = self._offsets.get(lsn)
        if loc is None:
            raise CorruptRecord(f"lsn {lsn} not present (last={self.last_lsn})")
        seg_first, off = loc
        seg = self._by_first[seg_first]
        frame = None
        if off >= seg.durable_size:
            with self._tail_lock:
                if off >= seg.durable_size:
                    i = bisect_right(seg.buf_offsets, off) - 1
                    frame = seg.buffer[i]
        if frame is None:
            fd = self._fd(seg)
            hdr = os.pread(fd, 4, off)
            (n,) = struct.unpack("<I", hdr)
            frame = hdr + os.pread(fd, n + 8, off + 4)
        (n,) = struct.unpack_from("<I", frame, 0)
        body = frame[4:4 + n]
        (crc,) = struct.unpack_from("<I", frame, 4 + n)
        if zlib.crc32(body) != crc:
            raise CorruptRecord(f"lsn {lsn}: crc mismatch")
        return decode_record(body)

    def scan(self, from_lsn: int, to_lsn: int):
        """Yield records with from_lsn <= LSN <= to_lsn in LSN order.
        Streams whole segments to avoid per-record syscalls."""
        if from_lsn < self.horizon:
            raise TruncatedLsn(f"scan start {from_lsn} below horizon {self.horizon}")
        to_lsn = min(to_lsn, self.flushed_lsn)
        if from_lsn > to_lsn:
            return
        loc = self._offsets.get(from_lsn)
        if loc is None:
            raise CorruptRecord(f"lsn {from_lsn} not present")
        seg_first, off = loc
        si = next(i for i, s in enumerate(self.segments) if s.first_lsn == seg_first)
        lsn = from_lsn
        while lsn <= to_lsn:
            seg = self.segments[si]
            fd = self._fd(seg)
            data = os.pread(fd, seg.durable_size - off, off)
            pos = 0
            while pos + 4 <= len(data) and lsn <= to_lsn:
                (n,) = struct.unpack_from("<I", data, pos)
                body = data[pos + 4:pos + 4 + n]
                rec = decode_record(body)
                if rec.lsn != lsn:
                    raise CorruptRecord(f"scan expected lsn {lsn}, found {rec.lsn}")
                yield rec
                lsn += 1
                pos += 4 + n + 4
            si += 1
            off = SEG_HDR_SIZE
            if lsn <= to_lsn and si >= len(self.segments):
                raise CorruptRecord(f"scan ran out of segments at lsn {lsn}")

    def _fd(self, seg) -> int:
        fd = self._fds.get(seg.first_lsn)
        if fd is None:
            fd = os.open(seg.path, os.O_RDONLY)
            self._fds[seg.first_lsn] = fd
        return fd

    # -- indexes -------------------------------------------------------------

    def nearest_image_above(self, page_no: int, lsn: int):
        """Smallest full-image record LSN for page_no strictly above lsn, or None."""
        lst = self.image_lsns.get(page_no)
        if not lst:
            return None
        i = bisect_right(lst, lsn)
        return lst[i] if i < len(lst) else None

    def last_commit_at_or_before(self, micros: int):
        """(lsn, commit_time) of the last commit with time <= micros, or None.
        Commit times are non-decreasing in LSN order by construction."""
        i = bisect_right(self.commit_times, micros)
        if i == 0:
            return None
        return self.commit_lsns[i - 1], self.commit_times[i - 1]

    def first_commit_lsn(self):
        return self.commit_lsns[0] if self.commit_lsns else None

    def checkpoint_at_or_before(self, lsn: int):
        """Begin LSN of the most recent checkpoint at or before lsn, or None."""
        i = bisect_right(self.checkpoint_lsns, lsn)
        return self.checkpoint_lsns[i - 1] if i else None

    # -- retention ------------------------------------------------------------

    def truncate_below(self, horizon: int) -> int:
        """Discard whole segments strictly below horizon. The logical horizon
        only advances to the first retained segment's first LSN, so every
        physically present record stays readable."""
        self.flush_up_to(self.last_lsn)
        keep_from = 0
        for i in range(len(self.segments) - 1):
            if self.segments[i + 1].first_lsn <= horizon:
                keep_from = i + 1
        removed = self.segments[:keep_from]
        if removed:
            self.segments = self.segments[keep_from:]
            for seg in removed:
                del self._by_first[seg.first_lsn]
                fd = self._fds.pop(seg.first_lsn, None)
                if fd is not None:
                    os.close(fd)
                self.total_bytes -= seg.durable_size
                os.remove(seg.path)
            cut = self.segments[0].first_lsn
            for lsn in [l for l in self._offsets if l < cut]:
                del self._offsets[lsn]
            self._drop_index_below(cut)
            self.horizon = max(self.horizon, cut)
        return self.horizon

    def _drop_index_below(self, cut):
        i = bisect_left(self.commit_lsns, cut)
        del self.commit_lsns[:i], self.commit_times[:i]
        i = bisect_left(self.checkpoint_lsns, cut)
        del self.checkpoint_lsns[:i], self.checkpoint_times[:i]
        for page_no in list(self.image_lsns):
            lst = self.image_lsns[page_no]
            j = bisect_left(lst, cut)
            if j:
                del lst[:j]
                if not lst:
                    del self.image_lsns[page_no]
