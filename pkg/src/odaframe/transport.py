"""Framed pub/sub wire protocol between pusher and collector.

Frame layout (big-endian), total length 11 + topic_len + 16*count:

    magic     4 bytes  "ODA1"
    version   u8       1
    topic_len u16
    topic     UTF-8 bytes
    count     u32      >= 1
    payload   count * (timestamp u64 ns, value i64)

Pushers connect and send a raw frame stream. Subscribers connect, send one
``SUB <prefix>\\n`` line and then receive the matching frame stream. Delivery
is at-most-once per connection; per-topic order is preserved. A disconnected
pusher buffers up to a bounded number of frames (dropping oldest) and
reconnects with backoff.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
import time
from collections import deque
from typing import Callable, Iterable

from .sensors import SensorReading, validate_topic_path

log = logging.getLogger(__name__)

MAGIC = b"ODA1"
VERSION = 1
_HEADER = struct.Struct(">4sBH")   # magic, version, topic_len
_COUNT = struct.Struct(">I")
_RECORD = struct.Struct(">Qq")     # timestamp u64, value i64

MAX_TOPIC_LEN = 0xFFFF
MAX_FRAME_READINGS = 1 << 20  # sanity bound when reading from a socket


class FrameError(ValueError):
    """Malformed frame; ``offset`` is the byte position of the defect."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


def frame_encode(topic: str, readings: Iterable[SensorReading]) -> bytes:
    readings = list(readings)
    if not readings:
        raise ValueError("a frame carries at least one reading")
    raw_topic = topic.encode("utf-8")
    if len(raw_topic) > MAX_TOPIC_LEN:
        raise ValueError("topic too long for frame")
    validate_topic_path(topic)
    parts = [_HEADER.pack(MAGIC, VERSION, len(raw_topic)), raw_topic,
             _COUNT.pack(len(readings))]
    parts.extend(_RECORD.pack(r.timestamp, r.value) for r in readings)
    return b"".join(parts)


def frame_decode(data: bytes) -> tuple[str, list[SensorReading]]:
    """Decode exactly one frame; rejects truncation and trailing bytes."""
    if len(data) < _HEADER.size:
        raise FrameError("truncated header", len(data))
    magic, version, topic_len = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FrameError("bad magic", 0)
    if version != VERSION:
        raise FrameError(f"unsupported version {version}", 4)
    pos = _HEADER.size
    if len(data) < pos + topic_len + _COUNT.size:
        raise FrameError("truncated topic/count", len(data))
    raw_topic = data[pos:pos + topic_len]
    try:
        topic = raw_topic.decode("utf-8")
        validate_topic_path(topic)
    except (UnicodeDecodeError, ValueError) as exc:
        raise FrameError(f"bad topic: {exc}", pos) from None
    pos += topic_len
    (count,) = _COUNT.unpack_from(data, pos)
    pos += _COUNT.size
    if count < 1:
        raise FrameError("count must be >= 1", pos - _COUNT.size)
    expected = pos + 16 * count
    if len(data) != expected:
        raise FrameError(f"frame length {len(data)} != {expected}",
                         min(len(data), expected))
    readings = []
    for _ in range(count):
        ts, value = _RECORD.unpack_from(data, pos)
        if ts == 0:
            raise FrameError("zero timestamp", pos)
        readings.append(SensorReading(value=value, timestamp=ts))
        pos += 16
    return topic, readings


def read_frame(sock_file) -> tuple[str, list[SensorReading]] | None:
    """Read one frame from a binary stream; None on clean EOF."""
    header = sock_file.read(_HEADER.size)
    if not header:
        return None
    if len(header) < _HEADER.size:
        raise FrameError("truncated header", len(header))
    magic, version, topic_len = _HEADER.unpack(header)
    if magic != MAGIC:
        raise FrameError("bad magic", 0)
    if version != VERSION:
        raise FrameError(f"unsupported version {version}", 4)
    rest = sock_file.read(topic_len + _COUNT.size)
    if len(rest) < topic_len + _COUNT.size:
        raise FrameError("truncated topic/count", _HEADER.size + len(rest))
    (count,) = _COUNT.unpack_from(rest, topic_len)
    if not 1 <= count <= MAX_FRAME_READINGS:
        raise FrameError(f"implausible reading count {count}", _HEADER.size + topic_len)
    payload = sock_file.read(16 * count)
    if len(payload) < 16 * count:
        raise FrameError("truncated payload", _HEADER.size + topic_len + 4 + len(payload))
    return frame_decode(header + rest + payload)


def topic_matches_prefix(topic: str, prefix: str) -> bool:
    """Segment-aware prefix match; '/' matches everything."""
    prefix = prefix.rstrip("/") or ""
    return topic == prefix or topic.startswith(prefix + "/")


class Publisher:
    """Pusher-side streaming client with bounded buffering and reconnect."""

    def __init__(self, address: tuple[str, int], max_buffered_frames: int = 10_000,
                 reconnect_floor_s: float = 0.05, reconnect_ceil_s: float = 2.0):
        self.address = address
        self.dropped_frames = 0
        self._queue: deque[bytes] = deque()
        self._max = max_buffered_frames
        self._floor = reconnect_floor_s
        self._ceil = reconnect_ceil_s
        self._cond = threading.Condition()
        self._closing = False
        self._thread = threading.Thread(target=self._run, name="oda-publisher",
                                        daemon=True)
        self._started = False

    def start(self) -> None:
        self._started = True
        self._thread.start()

    def publish(self, topic: str, readings: list[SensorReading]) -> None:
        if not readings:
            return
        frame = frame_encode(topic, readings)
        with self._cond:
            if len(self._queue) >= self._max:
                self._queue.popleft()
                self.dropped_frames += 1
            self._queue.append(frame)
            self._cond.notify()

    def flush(self, timeout: float = 5.0) -> bool:
        """Wait until the queue has drained (best effort)."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while self._queue and time.monotonic() < deadline:
                self._cond.wait(0.01)
            return not self._queue

    def close(self) -> None:
        with self._cond:
            self._closing = True
            self._cond.notify()
        if self._started:
            self._thread.join(timeout=5)

    def _run(self) -> None:
        backoff = self._floor
        sock = None
        while True:
            with self._cond:
                while not self._queue and not self._closing:
                    self._cond.wait(0.2)
                if self._closing and not self._queue:
                    break
                frame = self._queue[0]
            if sock is None:
                try:
                    sock = socket.create_connection(self.address, timeout=5)
                    sock.settimeout(5)
                    backoff = self._floor
                except OSError:
                    if self._closing:
                        break
                    time.sleep(backoff)
                    backoff = min(backoff * 2, self._ceil)
                    continue
            try:
                sock.sendall(frame)
            except OSError:
                try:
                    sock.close()
                finally:
                    sock = None
                continue
            with self._cond:
                # Only now is the frame really out; keep ordering intact.
                if self._queue and self._queue[0] is frame:
                    self._queue.popleft()
                self._cond.notify_all()
        if sock is not None:
            sock.close()


class _Subscriber:
    def __init__(self, sock: socket.socket, prefix: str, max_queued: int = 10_000):
        self.sock = sock
        self.prefix = prefix
        self.queue: deque[bytes] = deque()
        self.cond = threading.Condition()
        self.max_queued = max_queued
        self.dead = False


class CollectorServer:
    """Accepts pusher streams and fans frames out to prefix subscribers.

    Every decoded frame is handed to ``on_frame(topic, readings)`` (the
    collector daemon's ingest path) before fan-out.
    """

    def __init__(self, address: tuple[str, int],
                 on_frame: Callable[[str, list[SensorReading]], None] | None = None):
        self.on_frame = on_frame
        self._listener = socket.create_server(address)
        self._listener.settimeout(0.2)
        self.address = self._listener.getsockname()
        self._subs: list[_Subscriber] = []
        self._lock = threading.Lock()
        self._closing = False
        self._threads: list[threading.Thread] = []
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="oda-collector-accept", daemon=True)
        self.frames_received = 0
        self.decode_errors = 0

    def start(self) -> None:
        self._accept_thread.start()

    def close(self) -> None:
        self._closing = True
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            with sub.cond:
                sub.dead = True
                sub.cond.notify_all()
        if self._accept_thread.is_alive():
            self._accept_thread.join(timeout=2)

    def _accept_loop(self) -> None:
        while not self._closing:
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            t = threading.Thread(target=self._serve_conn, args=(conn,),
                                 name="oda-collector-conn", daemon=True)
            t.start()
            self._threads.append(t)

    def _serve_conn(self, conn: socket.socket) -> None:
        try:
            first = conn.recv(4, socket.MSG_PEEK)
        except OSError:
            conn.close()
            return
        if first.startswith(b"SUB"):
            self._serve_subscriber(conn)
        else:
            self._serve_pusher(conn)

    def _serve_pusher(self, conn: socket.socket) -> None:
        f = conn.makefile("rb")
        try:
            while not self._closing:
                try:
                    frame = read_frame(f)
                except FrameError as exc:
                    self.decode_errors += 1
                    log.warning("dropping pusher connection: %s", exc)
                    break
                if frame is None:
                    break
                topic, readings = frame
                self.frames_received += 1
                if self.on_frame is not None:
                    try:
                        self.on_frame(topic, readings)
                    except Exception:
                        log.exception("ingest failed for %s", topic)
                self._fan_out(topic, readings)
        finally:
            f.close()
            conn.close()

    def broadcast(self, topic: str, readings: list[SensorReading]) -> None:
        """Send locally produced readings (operator outputs) to subscribers."""
        self._fan_out(topic, readings)

    def _fan_out(self, topic: str, readings: list[SensorReading]) -> None:
        with self._lock:
            subs = [s for s in self._subs if topic_matches_prefix(topic, s.prefix)]
        if not subs:
            return
        frame = frame_encode(topic, readings)
        for sub in subs:
            with sub.cond:
                if sub.dead:
                    continue
                if len(sub.queue) >= sub.max_queued:
                    sub.queue.popleft()
                sub.queue.append(frame)
                sub.cond.notify()

    def _serve_subscriber(self, conn: socket.socket) -> None:
        f = conn.makefile("rb")
        try:
            line = f.readline(4096)
        finally:
            f.close()
        if not line.startswith(b"SUB ") or not line.endswith(b"\n"):
            conn.close()
            return
        prefix = line[4:-1].decode("utf-8", errors="replace").strip()
        sub = _Subscriber(conn, prefix)
        with self._lock:
            self._subs.append(sub)
        try:
            while not self._closing:
                with sub.cond:
                    while not sub.queue and not sub.dead:
                        sub.cond.wait(0.2)
                    if sub.dead:
                        break
                    frame = sub.queue.popleft()
                conn.sendall(frame)
        except OSError:
            pass
        finally:
            with self._lock:
                if sub in self._subs:
                    self._subs.remove(sub)
            conn.close()


class Subscription:
    """Client side of ``subscribe``: iterate to receive (topic, readings)."""

    def __init__(self, address: tuple[str, int], prefix: str):
        self._sock = socket.create_connection(address, timeout=5)
        self._sock.settimeout(None)
        self._sock.sendall(f"SUB {prefix}\n".encode("utf-8"))
        self._file = self._sock.makefile("rb")

    def __iter__(self):
        return self

    def __next__(self) -> tuple[str, list[SensorReading]]:
        try:
            frame = read_frame(self._file)
        except (OSError, ValueError):
            raise StopIteration from None
        if frame is None:
            raise StopIteration
        return frame

    def close(self) -> None:
        # Shut the socket down rather than closing the buffered file: a
        # reader blocked in read() holds the buffer lock, and shutdown is
        # what wakes it.
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
