"""Identity and actuator plugins.

Identity copies each block input's most recent value to the corresponding
output sensor. It is the smallest useful operator: handy for wiring tests,
pipeline demos and latency probes. The actuator variant is a control-stage
stub that logs the knob setting it would apply instead of touching
hardware, and reports the applied value on its output sensor.
"""

from __future__ import annotations

import logging

from ..blocks import Block
from ..operators import OperatorPlugin, OutputSample

log = logging.getLogger(__name__)


class IdentityPlugin(OperatorPlugin):
    plugin_name = "identity"

    def compute_block(self, block: Block, now_ns: int) -> list[OutputSample]:
        out = []
        for in_topic, out_topic in zip(block.input_topics, block.output_topics):
            latest = self.ctx.query.latest(in_topic.path)
            if latest is not None:
                out.append(OutputSample(out_topic.path, latest.value))
        return out


class ActuatorPlugin(OperatorPlugin):
    plugin_name = "actuator"

    def __init__(self, config, ctx):
        super().__init__(config, ctx)
        self.knob = config.params.get("knob", "cpu-frequency")
        self.applied: list[tuple[str, int]] = []

    def compute_block(self, block: Block, now_ns: int) -> list[OutputSample]:
        latest = self.ctx.query.latest(block.input_topics[0].path)
        if latest is None:
            return []
        log.info("%s: would set %s on %s to %d",
                 self.config.name, self.knob, block.name, latest.value)
        self.applied.append((block.name, latest.value))
        return [OutputSample(t.path, latest.value) for t in block.output_topics]
