"""Query engine: the single access point operators use to read sensor data.

Serves relative (offset against newest) and absolute (timestamp range)
queries, preferring the in-memory sensor caches and falling back to the
persistent store when the requested range reaches further back than the
cache holds. Also exposes the sensor-tree navigator and, when bound, job
metadata. Data sources are bound once through callbacks at startup.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

from .jobs import JobInfo
from .sensors import SensorCache, SensorReading
from .tree import SensorTree


class UnknownSensorError(KeyError):
    """Topic known to neither the caches nor the store."""


class FeatureUnavailableError(RuntimeError):
    """An optional callback (store, jobs) was never bound."""


class StoreReader(Protocol):
    def query(self, topic: str, t0: int, t1: int) -> list[SensorReading]: ...
    def tail_timestamp(self, topic: str) -> int | None: ...
    def has_topic(self, topic: str) -> bool: ...


@dataclass(frozen=True)
class QueryRequest:
    """One range query. Exactly one of ``offset_ns`` / (``t0``, ``t1``) is set."""

    topic: str
    offset_ns: int | None = None
    t0: int | None = None
    t1: int | None = None

    def __post_init__(self) -> None:
        relative = self.offset_ns is not None
        absolute = self.t0 is not None or self.t1 is not None
        if relative == absolute:
            raise ValueError("exactly one of offset_ns / (t0, t1) must be given")
        if relative and self.offset_ns < 0:
            raise ValueError("offset_ns must be >= 0")
        if absolute:
            if self.t0 is None or self.t1 is None:
                raise ValueError("absolute queries need both t0 and t1")
            if self.t0 > self.t1:
                raise ValueError(f"t0 ({self.t0}) > t1 ({self.t1})")

    @property
    def is_relative(self) -> bool:
        return self.offset_ns is not None


@dataclass
class QueryResult:
    readings: list[SensorReading]
    partial: bool = False  # range reached beyond available history
    source: str = "cache"  # "cache" | "store"


@dataclass
class DataSourceBinding:
    """Callbacks wiring the engine to its host daemon, set once at startup."""

    cache_lookup: Callable[[str], SensorCache | None]
    store: StoreReader | None = None
    job_lookup: Callable[[int], list[JobInfo]] | None = None
    tree_lookup: Callable[[], SensorTree] | None = None


class QueryEngine:
    """One engine per daemon; fully thread-safe for queries."""

    def __init__(self, binding: DataSourceBinding):
        self._binding = binding

    # -- data ----------------------------------------------------------------

    def query(self, req: QueryRequest) -> QueryResult:
        cache = self._binding.cache_lookup(req.topic)
        store = self._binding.store
        if cache is None and (store is None or not store.has_topic(req.topic)):
            raise UnknownSensorError(req.topic)

        if req.is_relative:
            return self._query_relative(req, cache, store)
        return self._query_absolute(req, cache, store)

    def _query_relative(self, req: QueryRequest, cache, store) -> QueryResult:
        if cache is not None:
            newest = cache.newest()
            oldest = cache.oldest()
            if newest is not None:
                covered = req.offset_ns == 0 or \
                    newest.timestamp - req.offset_ns >= oldest.timestamp
                if covered:
                    return QueryResult(cache.view_relative(req.offset_ns))
                if store is None:
                    return QueryResult(cache.view_relative(req.offset_ns), partial=True)
                t1 = newest.timestamp
                return QueryResult(
                    store.query(req.topic, t1 - req.offset_ns, t1), source="store")
            if store is None:
                return QueryResult([])
        # No cached data; anchor the offset at the store's newest record.
        if store is None or not store.has_topic(req.topic):
            return QueryResult([], partial=True)
        tail = store.tail_timestamp(req.topic)
        if tail is None:
            return QueryResult([], source="store")
        return QueryResult(
            store.query(req.topic, tail - req.offset_ns, tail), source="store")

    def _query_absolute(self, req: QueryRequest, cache, store) -> QueryResult:
        if cache is not None:
            oldest = cache.oldest()
            if oldest is not None and req.t0 >= oldest.timestamp:
                return QueryResult(cache.view_absolute(req.t0, req.t1))
            if store is None:
                if oldest is None:
                    return QueryResult([])
                return QueryResult(cache.view_absolute(req.t0, req.t1), partial=True)
        if store is None:
            return QueryResult([], partial=True)
        return QueryResult(store.query(req.topic, req.t0, req.t1), source="store")

    # -- convenience wrappers used by plugins ---------------------------------

    def latest(self, topic: str) -> SensorReading | None:
        res = self.query(QueryRequest(topic, offset_ns=0))
        return res.readings[-1] if res.readings else None

    def window(self, topic: str, offset_ns: int) -> list[SensorReading]:
        return self.query(QueryRequest(topic, offset_ns=offset_ns)).readings

    # -- namespace -------------------------------------------------------------

    def navigator(self) -> SensorTree:
        if self._binding.tree_lookup is None:
            raise FeatureUnavailableError("no sensor tree bound")
        return self._binding.tree_lookup()

    def jobs(self, now_ns: int) -> list[JobInfo]:
        if self._binding.job_lookup is None:
            raise FeatureUnavailableError("no job source bound")
        return self._binding.job_lookup(now_ns)

    def scale_of(self, topic: str) -> int:
        cache = self._binding.cache_lookup(topic)
        return cache.scale if cache is not None else 1
