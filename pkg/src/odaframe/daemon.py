"""Daemon wiring for the two roles.

A pusher samples sources into local caches, runs in-band operators and
streams readings to a collector. A collector receives frames, writes them
through to caches and the persistent store, runs out-of-band operators and
re-broadcasts to subscribers. Both expose the REST control plane.

Daemons normally run on real time (sampling thread + tick scheduler); the
scenario harness instead constructs them with ``real_time=False`` and
drives ``step(now_ns)`` on a virtual clock, which keeps case studies
deterministic and fast. An injectable ``uplink`` callable replaces the TCP
publisher for in-process pusher-to-collector wiring.
"""

from __future__ import annotations

import logging
import threading
import time
from typing import Callable

from .config import DaemonConfig
from .jobs import JobRegistry
from .operators import OperatorManager, PluginContext
from .query import DataSourceBinding, QueryEngine
from .registry import SensorRegistry
from .restapi import RestServer
from .sensors import SensorReading
from .sources import Source, make_source
from .store import AppendLogStore
from .transport import CollectorServer, Publisher

log = logging.getLogger(__name__)


class Daemon:
    def __init__(self, config: DaemonConfig, *, real_time: bool = True,
                 uplink: Callable[[str, list[SensorReading]], None] | None = None,
                 clock_ns: Callable[[], int] = time.time_ns):
        config.validate()
        self.config = config
        self.real_time = real_time
        self.clock_ns = clock_ns
        self.registry = SensorRegistry(
            capacity_ns=config.cache.capacity_ns,
            nominal_interval_ns=config.cache.interval_ns,
            hierarchy=config.hierarchy,
        )
        self.jobs = JobRegistry()
        if config.jobs_file:
            self.jobs.load_jsonl(config.jobs_file)

        self.store: AppendLogStore | None = None
        self.server: CollectorServer | None = None
        if config.role == "collector":
            self.store = AppendLogStore(config.store_dir)
            self.server = CollectorServer(config.listen, on_frame=self.ingest)

        self._publisher: Publisher | None = None
        self._uplink = uplink
        if config.role == "pusher" and uplink is None and config.connect:
            self._publisher = Publisher(config.connect)
            self._uplink = self._publish

        self.query = QueryEngine(DataSourceBinding(
            cache_lookup=self.registry.cache_for,
            store=self.store,
            job_lookup=self.jobs.active,
            tree_lookup=self.registry.tree,
        ))
        self.manager = OperatorManager(
            PluginContext(query=self.query, registry=self.registry,
                          emit=self.emit, clock_ns=self.clock_ns),
            workers=config.workers)

        self.sources: list[Source] = [make_source(s) for s in config.sources]
        for source in self.sources:
            self.registry.register_all(source.topics())

        self.rest: RestServer | None = None
        if config.rest_listen is not None:
            self.rest = RestServer(self, config.rest_listen)

        self._sampler: threading.Thread | None = None
        self._stop = threading.Event()
        self.readings_sampled = 0
        self.readings_ingested = 0

    # -- data paths -----------------------------------------------------------

    def _publish(self, topic: str, readings: list[SensorReading]) -> None:
        self._publisher.publish(topic, readings)

    def ingest(self, topic: str, readings: list[SensorReading]) -> None:
        """Collector write-through: cache + store (called per received frame)."""
        cache = self.registry.register(topic)
        for r in readings:
            cache.store(r)
        if self.store is not None:
            self.store.append(topic, readings)
        self.readings_ingested += len(readings)

    def emit(self, topic: str, reading: SensorReading, streaming: bool) -> None:
        """Operator output slot: cache always; transport/store when streaming."""
        self.registry.register(topic).store(reading)
        if not streaming:
            return
        if self.config.role == "pusher":
            if self._uplink is not None:
                self._uplink(topic, [reading])
        else:
            if self.store is not None:
                self.store.append(topic, [reading])
            if self.server is not None:
                self.server.broadcast(topic, [reading])

    def sample_sources(self, now_ns: int) -> None:
        """One sampling round: read every source, cache and forward."""
        for source in self.sources:
            for topic, reading in source.sample(now_ns):
                cache = self.registry.cache_for(topic)
                if cache is None:
                    cache = self.registry.register(topic)
                cache.store(reading)
                self.readings_sampled += 1
                if self._uplink is not None:
                    self._uplink(topic, [reading])

    # -- lifecycle ----------------------------------------------------------------

    def start(self) -> None:
        if self.server is not None:
            self.server.start()
        if self._publisher is not None:
            self._publisher.start()
        if self.rest is not None:
            self.rest.start()
        for plugin_name, sections in self.config.operators.items():
            report = self.manager.load_plugin(plugin_name, sections)
            for entry in report.operators:
                self.manager.start(plugin_name, entry["name"])
                for skip in entry["skipped"]:
                    log.warning("%s/%s: block %s skipped: %s", plugin_name,
                                entry["name"], skip["block"], skip["reason"])
        if self.real_time:
            if self.sources:
                self._sampler = threading.Thread(
                    target=self._sample_loop, name="oda-sampler", daemon=True)
                self._sampler.start()
            self.manager.start_scheduler()

    def stop(self) -> None:
        self._stop.set()
        if self._sampler is not None:
            self._sampler.join(timeout=5)
        self.manager.stop_scheduler()
        self.manager.stop_all()
        if self._publisher is not None:
            self._publisher.flush(timeout=2)
            self._publisher.close()
        if self.rest is not None:
            self.rest.close()
        if self.server is not None:
            self.server.close()
        if self.store is not None:
            self.store.flush()
            self.store.close()

    def _sample_loop(self) -> None:
        interval_ns = int(self.config.source_interval_s * 1e9)
        next_ns = (self.clock_ns() // interval_ns + 1) * interval_ns
        while not self._stop.is_set():
            now = self.clock_ns()
            if now < next_ns:
                time.sleep(min((next_ns - now) / 1e9, 0.2))
                continue
            self.sample_sources(next_ns)
            next_ns += interval_ns

    # -- virtual-clock drive ---------------------------------------------------------

    def step(self, now_ns: int) -> None:
        """One deterministic round: sample sources, then tick all operators."""
        self.sample_sources(now_ns)
        self.manager.tick_all(now_ns)

    # -- introspection ------------------------------------------------------------------

    def status(self) -> dict:
        out = {
            "role": self.config.role,
            "sensors": len(self.registry.topics()),
            "readings_sampled": self.readings_sampled,
            "readings_ingested": self.readings_ingested,
        }
        if self._publisher is not None:
            out["publisher_dropped_frames"] = self._publisher.dropped_frames
        if self.server is not None:
            out["frames_received"] = self.server.frames_received
        if self.store is not None:
            out["store_topics"] = len(self.store.topics())
        return out
