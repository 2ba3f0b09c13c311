"""Embedded persistent time-series store: one append-only file per topic.

Records are 16-byte big-endian (timestamp u64 ns, value i64) pairs, sorted
within each file. A flat ``topics.idx`` file maps topics to segment file
names. Batches are sorted on append; records older than the segment tail
are rejected and counted. Readers open their own handles and only consume
whole records, so they see a consistent prefix of concurrent writes.
"""

from __future__ import annotations

import bisect
import struct
import threading
from pathlib import Path

from .sensors import SensorReading

_RECORD = struct.Struct(">Qq")
INDEX_NAME = "topics.idx"


class StoreError(OSError):
    pass


class _Segment:
    __slots__ = ("filename", "tail_ts", "handle", "lock")

    def __init__(self, filename: str, tail_ts: int | None):
        self.filename = filename
        self.tail_ts = tail_ts
        self.handle = None
        self.lock = threading.Lock()


class AppendLogStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.rejected_count = 0
        self._segments: dict[str, _Segment] = {}
        self._lock = threading.Lock()
        self._index_path = self.root / INDEX_NAME
        self._load_index()

    def _load_index(self) -> None:
        if not self._index_path.exists():
            return
        for line in self._index_path.read_text().splitlines():
            if not line.strip():
                continue
            filename, topic = line.split("\t", 1)
            seg = _Segment(filename, self._read_tail(filename))
            self._segments[topic] = seg

    def _read_tail(self, filename: str) -> int | None:
        path = self.root / filename
        if not path.exists():
            return None
        size = path.stat().st_size
        whole = size - size % _RECORD.size
        if whole == 0:
            return None
        with path.open("rb") as f:
            f.seek(whole - _RECORD.size)
            ts, _ = _RECORD.unpack(f.read(_RECORD.size))
        return ts

    def _segment_for(self, topic: str, create: bool) -> _Segment | None:
        with self._lock:
            seg = self._segments.get(topic)
            if seg is None and create:
                filename = f"{len(self._segments):06d}.seg"
                seg = _Segment(filename, None)
                self._segments[topic] = seg
                with self._index_path.open("a") as f:
                    f.write(f"{filename}\t{topic}\n")
            return seg

    # -- write path ----------------------------------------------------------

    def append(self, topic: str, readings: list[SensorReading]) -> int:
        """Append a batch; returns the number of records accepted."""
        if not readings:
            return 0
        seg = self._segment_for(topic, create=True)
        batch = sorted(readings, key=lambda r: r.timestamp)
        with seg.lock:
            accepted = [r for r in batch
                        if seg.tail_ts is None or r.timestamp >= seg.tail_ts]
            self.rejected_count += len(batch) - len(accepted)
            if not accepted:
                return 0
            if seg.handle is None:
                seg.handle = (self.root / seg.filename).open("ab")
            seg.handle.write(b"".join(
                _RECORD.pack(r.timestamp, r.value) for r in accepted))
            seg.handle.flush()
            seg.tail_ts = accepted[-1].timestamp
            return len(accepted)

    # -- read path -----------------------------------------------------------

    def query(self, topic: str, t0: int, t1: int) -> list[SensorReading]:
        """Stored readings with t0 <= ts <= t1, oldest first; unknown topic -> []."""
        if t0 > t1:
            raise ValueError(f"t0 ({t0}) > t1 ({t1})")
        seg = self._segment_for(topic, create=False)
        if seg is None:
            return []
        records = self._read_records(seg)
        ts_list = [ts for ts, _ in records]
        lo = bisect.bisect_left(ts_list, t0)
        hi = bisect.bisect_right(ts_list, t1)
        return [SensorReading(value=v, timestamp=ts) for ts, v in records[lo:hi]]

    def _read_records(self, seg: _Segment) -> list[tuple[int, int]]:
        path = self.root / seg.filename
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            return []
        whole = len(data) - len(data) % _RECORD.size
        return list(_RECORD.iter_unpack(data[:whole]))

    def tail_timestamp(self, topic: str) -> int | None:
        seg = self._segment_for(topic, create=False)
        return seg.tail_ts if seg else None

    def has_topic(self, topic: str) -> bool:
        with self._lock:
            return topic in self._segments

    def topics(self) -> list[str]:
        with self._lock:
            return sorted(self._segments)

    def record_count(self, topic: str) -> int:
        seg = self._segment_for(topic, create=False)
        if seg is None:
            return 0
        path = self.root / seg.filename
        return path.stat().st_size // _RECORD.size if path.exists() else 0

    # -- lifecycle -------------------------------------------------------------

    def flush(self) -> None:
        with self._lock:
            segs = list(self._segments.values())
        for seg in segs:
            with seg.lock:
                if seg.handle is not None:
                    seg.handle.flush()

    def close(self) -> None:
        with self._lock:
            segs = list(self._segments.values())
        for seg in segs:
            with seg.lock:
                if seg.handle is not None:
                    seg.handle.close()
                    seg.handle = None
