"""Sensor identities, readings and the per-sensor in-memory ring cache.

Readings are (int64 value, uint64 ns timestamp) pairs. Each sensor keeps a
time-bounded ring of recent readings that supports two view modes: a
*relative* view (offset against the newest reading, O(1) index arithmetic
plus a small boundary fix-up) and an *absolute* view (explicit timestamp
range, binary search).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

NS_PER_S = 1_000_000_000

# Relative views locate the range boundary by index arithmetic from the
# nominal sampling interval; jitter is corrected by scanning at most this
# many entries before falling back to binary search.
RELATIVE_FIXUP_LIMIT = 16


class InvalidRangeError(ValueError):
    """Absolute query with t0 > t1."""


@dataclass(frozen=True, slots=True)
class Topic:
    """Slash-separated sensor key, e.g. ``/rack4/chassis2/server3/power``.

    The last segment is the sensor name, the preceding segments its
    placement in the system hierarchy.
    """

    path: str

    @classmethod
    def parse(cls, text: str) -> "Topic":
        validate_topic_path(text)
        return cls(text)

    @property
    def segments(self) -> tuple[str, ...]:
        return tuple(self.path.split("/")[1:])

    @property
    def name(self) -> str:
        return self.path.rsplit("/", 1)[1]

    @property
    def placement(self) -> tuple[str, ...]:
        return self.segments[:-1]

    def __str__(self) -> str:
        return self.path


def validate_topic_path(text: str) -> None:
    """Raise ValueError unless ``text`` is a well-formed topic path."""
    if not text:
        raise ValueError("topic must be non-empty")
    if not text.startswith("/"):
        raise ValueError(f"topic must start with '/': {text!r}")
    if text.endswith("/"):
        raise ValueError(f"topic must not end with '/': {text!r}")
    if "//" in text:
        raise ValueError(f"topic must not contain empty segments: {text!r}")


I64_MIN = -(1 << 63)
I64_MAX = (1 << 63) - 1
U64_MAX = (1 << 64) - 1


@dataclass(frozen=True, slots=True)
class SensorReading:
    """One timestamped sample. ``timestamp`` is ns since epoch, > 0."""

    value: int
    timestamp: int

    def __post_init__(self) -> None:
        if not (I64_MIN <= self.value <= I64_MAX):
            raise ValueError(f"value out of int64 range: {self.value}")
        if not (0 < self.timestamp <= U64_MAX):
            raise ValueError(f"timestamp must be in (0, 2^64): {self.timestamp}")


class SensorCache:
    """Time-bounded ring buffer of readings for one sensor.

    Single writer (the sampling/ingest path), any number of readers. Views
    copy the selected range out under the lock, so a reader never observes
    a partially written entry and never blocks the writer for longer than
    one snapshot.

    Out-of-order arrivals (timestamp older than the current newest) are
    dropped and counted in ``drop_count``; equal timestamps are kept.
    """

    def __init__(self, capacity_ns: int, nominal_interval_ns: int = NS_PER_S,
                 scale: int = 1):
        if capacity_ns <= 0:
            raise ValueError("capacity_ns must be positive")
        if nominal_interval_ns <= 0:
            raise ValueError("nominal_interval_ns must be positive")
        self.capacity_ns = capacity_ns
        self.nominal_interval_ns = nominal_interval_ns
        # Fixed-point scale of the stored integer values (1 = raw counters;
        # analytics outputs typically declare 1000).
        self.scale = scale
        self.drop_count = 0
        # Ring sized for capacity/interval entries plus 10% headroom; grows
        # if a burst outpaces the nominal rate.
        slots = max(2, int(capacity_ns / nominal_interval_ns * 1.1) + 2)
        self._buf: list[SensorReading | None] = [None] * slots
        self._start = 0  # index of oldest entry
        self._count = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self._count

    # -- write path ---------------------------------------------------------

    def store(self, reading: SensorReading) -> None:
        with self._lock:
            if self._count:
                newest = self._buf[self._logical(self._count - 1)]
                if reading.timestamp < newest.timestamp:
                    self.drop_count += 1
                    return
            if self._count == len(self._buf):
                self._grow()
            self._buf[self._logical(self._count)] = reading
            self._count += 1
            self._evict(reading.timestamp)

    def _grow(self) -> None:
        old = [self._buf[self._logical(i)] for i in range(self._count)]
        self._buf = old + [None] * len(old)
        self._start = 0

    def _evict(self, newest_ts: int) -> None:
        cutoff = newest_ts - self.capacity_ns
        while self._count and self._buf[self._start].timestamp < cutoff:
            self._buf[self._start] = None
            self._start = (self._start + 1) % len(self._buf)
            self._count -= 1

    # -- read path ----------------------------------------------------------

    def _logical(self, i: int) -> int:
        return (self._start + i) % len(self._buf)

    def _ts_at(self, i: int) -> int:
        return self._buf[self._logical(i)].timestamp

    def newest(self) -> SensorReading | None:
        with self._lock:
            if not self._count:
                return None
            return self._buf[self._logical(self._count - 1)]

    def oldest(self) -> SensorReading | None:
        with self._lock:
            if not self._count:
                return None
            return self._buf[self._start]

    def view_relative(self, offset_ns: int) -> list[SensorReading]:
        """Readings with timestamp >= newest - offset_ns, oldest first.

        Offset 0 returns exactly the most recent reading. The range start is
        estimated from the nominal interval and corrected by scanning at most
        RELATIVE_FIXUP_LIMIT entries; extreme jitter falls back to binary
        search.
        """
        if offset_ns < 0:
            raise ValueError("offset_ns must be >= 0")
        with self._lock:
            if not self._count:
                return []
            if offset_ns == 0:
                return [self._buf[self._logical(self._count - 1)]]
            newest_ts = self._ts_at(self._count - 1)
            cutoff = newest_ts - offset_ns
            first = self._relative_start(cutoff, offset_ns)
            return [self._buf[self._logical(i)] for i in range(first, self._count)]

    def _relative_start(self, cutoff: int, offset_ns: int) -> int:
        """Index of the first entry with timestamp >= cutoff (count > 0)."""
        guess = self._count - 1 - offset_ns // self.nominal_interval_ns
        guess = min(max(guess, 0), self._count - 1)
        if self._ts_at(guess) >= cutoff:
            # Walk back while the previous entry is still inside the range.
            for _ in range(RELATIVE_FIXUP_LIMIT):
                if guess == 0 or self._ts_at(guess - 1) < cutoff:
                    return guess
                guess -= 1
        else:
            for _ in range(RELATIVE_FIXUP_LIMIT):
                guess += 1
                if guess == self._count or self._ts_at(guess) >= cutoff:
                    return guess
        # Sampling jitter exceeded the fix-up window.
        return self._bisect_left(cutoff)

    def view_absolute(self, t0: int, t1: int) -> list[SensorReading]:
        """Readings with t0 <= timestamp <= t1, located by binary search."""
        if t0 > t1:
            raise InvalidRangeError(f"t0 ({t0}) > t1 ({t1})")
        with self._lock:
            if not self._count:
                return []
            lo = self._bisect_left(t0)
            hi = self._bisect_right(t1)
            return [self._buf[self._logical(i)] for i in range(lo, hi)]

    def _bisect_left(self, ts: int) -> int:
        lo, hi = 0, self._count
        while lo < hi:
            mid = (lo + hi) // 2
            if self._ts_at(mid) < ts:
                lo = mid + 1
            else:
                hi = mid
        return lo

    def _bisect_right(self, ts: int) -> int:
        lo, hi = 0, self._count
        while lo < hi:
            mid = (lo + hi) // 2
            if self._ts_at(mid) <= ts:
                lo = mid + 1
            else:
                hi = mid
        return lo

    def snapshot(self) -> list[SensorReading]:
        """Full copy of the current contents, oldest first."""
        with self._lock:
            return [self._buf[self._logical(i)] for i in range(self._count)]
