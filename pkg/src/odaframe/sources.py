"""Sampling sources for the pusher daemon.

Hardware samplers are out of scope; these stand-ins cover the test and
replay paths: ``tester`` emits a configurable number of monotonically
increasing counters (the overhead-measurement baseline), ``replay`` feeds
readings from a CSV file of ``topic,timestamp_ns,value`` rows.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .sensors import SensorReading


class Source:
    """One sampling plugin: announces topics once, then samples per tick."""

    def topics(self) -> list[str]:
        raise NotImplementedError

    def sample(self, now_ns: int) -> list[tuple[str, SensorReading]]:
        raise NotImplementedError


class TesterSource(Source):
    """N strictly increasing integer sensors; value = number of samples taken."""

    def __init__(self, sensors: int = 1000, prefix: str = "/test"):
        if sensors < 1:
            raise ValueError("sensors must be >= 1")
        width = max(4, len(str(sensors - 1)))
        self._topics = [f"{prefix}/t{i:0{width}d}" for i in range(sensors)]
        self._tick = 0

    def topics(self) -> list[str]:
        return list(self._topics)

    def sample(self, now_ns: int) -> list[tuple[str, SensorReading]]:
        self._tick += 1
        reading = SensorReading(value=self._tick, timestamp=now_ns)
        return [(t, reading) for t in self._topics]


class ReplaySource(Source):
    """Replays a recorded reading set, one batch per distinct timestamp."""

    def __init__(self, path: str | Path):
        rows: list[tuple[str, int, int]] = []
        with Path(path).open(newline="") as f:
            for row in csv.reader(f):
                if not row or row[0].startswith("#"):
                    continue
                rows.append((row[0], int(row[1]), int(row[2])))
        rows.sort(key=lambda r: r[1])
        self._rows = rows
        self._topics = sorted({r[0] for r in rows})
        self._pos = 0

    def topics(self) -> list[str]:
        return list(self._topics)

    def sample(self, now_ns: int) -> list[tuple[str, SensorReading]]:
        """Emit all recorded readings with timestamp <= now, not yet emitted."""
        out = []
        while self._pos < len(self._rows) and self._rows[self._pos][1] <= now_ns:
            topic, ts, value = self._rows[self._pos]
            out.append((topic, SensorReading(value=value, timestamp=ts)))
            self._pos += 1
        return out


def make_source(section: dict) -> Source:
    kind = section.get("plugin")
    if kind == "tester":
        return TesterSource(sensors=int(section.get("sensors", 1000)),
                            prefix=section.get("prefix", "/test"))
    if kind == "replay":
        if "path" not in section:
            raise ValueError("replay source needs a path")
        return ReplaySource(section["path"])
    raise ValueError(f"unknown source plugin {kind!r}")
