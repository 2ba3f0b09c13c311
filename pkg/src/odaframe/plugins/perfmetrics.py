"""Derived performance metrics over counter windows.

``ratio`` divides the deltas of two counters (CPI = dcycles/dinstructions,
vectorization = dvector-instructions/dinstructions); ``rate`` divides one
counter's delta by elapsed time in seconds (FLOPS). Deltas are taken
last-minus-first over the window. A zero denominator suppresses the output
for the tick; a negative delta means the counter reset, which is also
suppressed and counted.

Outputs are fixed-point integers (params.scale, default x1000).
"""

from __future__ import annotations

from ..blocks import Block
from ..operators import ConfigError, OperatorPlugin, OutputSample
from ..sensors import NS_PER_S, SensorReading


def window_delta(readings: list[SensorReading]) -> int | None:
    """Last-minus-first counter delta; None when fewer than 2 readings."""
    if len(readings) < 2:
        return None
    return readings[-1].value - readings[0].value


def derive_ratio(num: list[SensorReading], den: list[SensorReading]) -> float | None:
    """None = no output this tick; raises OverflowError never (pure ints)."""
    dn, dd = window_delta(num), window_delta(den)
    if dn is None or dd is None:
        return None
    if dn < 0 or dd < 0:
        raise CounterReset()
    if dd == 0:
        return None
    return dn / dd


def derive_rate(window: list[SensorReading]) -> float | None:
    dv = window_delta(window)
    if dv is None:
        return None
    if dv < 0:
        raise CounterReset()
    dt_ns = window[-1].timestamp - window[0].timestamp
    if dt_ns == 0:
        return None
    return dv * NS_PER_S / dt_ns


class CounterReset(Exception):
    """A counter moved backwards inside the window."""


class PerfmetricsPlugin(OperatorPlugin):
    plugin_name = "perfmetrics"
    output_scale = 1000

    def __init__(self, config, ctx):
        super().__init__(config, ctx)
        p = config.params
        self.kind = p.get("kind", "ratio")
        if self.kind not in ("ratio", "rate"):
            raise ConfigError(f"{config.name}: kind must be 'ratio' or 'rate'")
        self.window_intervals = int(p.get("window_intervals", 1))
        self.scale = int(p.get("scale", 1000))
        self.output_scale = self.scale
        self.reset_count = 0

    def _window(self, topic: str) -> list[SensorReading]:
        return self.ctx.query.window(topic, self.window_intervals * self.config.interval_ns)

    def compute_block(self, block: Block, now_ns: int) -> list[OutputSample]:
        try:
            if self.kind == "ratio":
                if len(block.input_topics) < 2:
                    return []
                value = derive_ratio(self._window(block.input_topics[0].path),
                                     self._window(block.input_topics[1].path))
            else:
                value = derive_rate(self._window(block.input_topics[0].path))
        except CounterReset:
            self.reset_count += 1
            return []
        if value is None:
            return []
        encoded = int(round(value * self.scale))
        return [OutputSample(t.path, encoded) for t in block.output_topics]
