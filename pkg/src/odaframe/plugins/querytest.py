"""Query-engine load generator for overhead measurements.

Each tick issues a configured number of queries over the block's input
sensors (round-robin), in relative or absolute mode with a configured time
range, and records per-query wall latency. The latency distribution is
exposed through the ``stats`` action and, when operator outputs are
declared, published as microsecond quantile sensors.
"""

from __future__ import annotations

import json
import threading
import time

from ..blocks import Block
from ..operators import ConfigError, OperatorPlugin, OutputSample
from ..query import QueryRequest
from ..sensors import NS_PER_S


def quantile(sorted_values: list[float], q: float) -> float:
    if not sorted_values:
        return 0.0
    pos = q * (len(sorted_values) - 1)
    lo = int(pos)
    frac = pos - lo
    if lo + 1 < len(sorted_values):
        return sorted_values[lo] + (sorted_values[lo + 1] - sorted_values[lo]) * frac
    return sorted_values[lo]


class QuerytestPlugin(OperatorPlugin):
    plugin_name = "querytest"
    actions = ("stats", "reset")
    output_scale = 1

    def __init__(self, config, ctx):
        super().__init__(config, ctx)
        p = config.params
        self.queries_per_tick = int(p.get("queries", 10))
        self.range_ns = int(float(p.get("range_s", 60)) * NS_PER_S)
        self.query_mode = p.get("query_mode", "relative")
        if self.query_mode not in ("relative", "absolute"):
            raise ConfigError(f"{config.name}: query_mode must be "
                              f"'relative' or 'absolute'")
        self.latencies_ns: list[int] = []
        self._lock = threading.Lock()
        self._cursor = 0

    def compute_block(self, block: Block, now_ns: int) -> list[OutputSample]:
        topics = block.input_topics
        if not topics or self.queries_per_tick == 0:
            return []
        recorded = []
        for _ in range(self.queries_per_tick):
            topic = topics[self._cursor % len(topics)].path
            self._cursor += 1
            if self.query_mode == "relative":
                req = QueryRequest(topic, offset_ns=self.range_ns)
            else:
                newest = self.ctx.query.latest(topic)
                if newest is None:
                    continue
                req = QueryRequest(topic, t0=max(1, newest.timestamp - self.range_ns),
                                   t1=newest.timestamp)
            t0 = time.perf_counter_ns()
            self.ctx.query.query(req)
            recorded.append(time.perf_counter_ns() - t0)
        with self._lock:
            self.latencies_ns.extend(recorded)
        out = []
        template = self.config.template
        if template and template.operator_outputs and recorded:
            recorded.sort()
            med_us = int(round(quantile(recorded, 0.5) / 1000))
            for name in template.operator_outputs:
                out.append(OutputSample(self.operator_output_topic(name), med_us))
        return out

    def snapshot_latencies(self) -> list[int]:
        with self._lock:
            return list(self.latencies_ns)

    def custom_action(self, action: str, params: dict) -> str:
        if action == "reset":
            with self._lock:
                self.latencies_ns.clear()
            return "reset"
        if action != "stats":
            return super().custom_action(action, params)
        with self._lock:
            lat = sorted(self.latencies_ns)
        return json.dumps({
            "count": len(lat),
            "p50_us": quantile(lat, 0.5) / 1000,
            "p90_us": quantile(lat, 0.9) / 1000,
            "p99_us": quantile(lat, 0.99) / 1000,
            "max_us": (lat[-1] / 1000) if lat else 0.0,
        })
