"""Per-job statistical aggregation: deciles of a derived metric.

A job operator: at every tick it asks the query engine for the active
jobs and rebuilds one block per job, with the template's input expressions
resolved against every node in the job's node list. For each job it reads
the most recent value of every input sensor and emits the 11 deciles
(0th = minimum, 5th = median, 10th = maximum, linear interpolation between
order statistics) of that distribution under
``<job_prefix>/<job_id>/<metric>-decile<k>``.
"""

from __future__ import annotations

import logging

from ..blocks import Block
from ..operators import OperatorPlugin, OutputSample, build_job_blocks

log = logging.getLogger(__name__)


def deciles(values: list[float]) -> list[float]:
    """Deciles 0..10 by linear interpolation between order statistics."""
    if not values:
        raise ValueError("deciles need at least one value")
    xs = sorted(values)
    n = len(xs)
    out = []
    for k in range(11):
        pos = k * (n - 1) / 10
        lo = int(pos)
        frac = pos - lo
        if lo + 1 < n:
            out.append(xs[lo] + (xs[lo + 1] - xs[lo]) * frac)
        else:
            out.append(xs[lo])
    return out


class PersystPlugin(OperatorPlugin):
    plugin_name = "persyst"
    is_job_operator = True
    output_scale = 1000

    def __init__(self, config, ctx):
        super().__init__(config, ctx)
        p = config.params
        self.metric = p.get("metric", "cpi")
        self.job_prefix = p.get("job_prefix", "/jobs").rstrip("/")
        self.input_scale = int(p.get("input_scale", 1000))
        self.scale = int(p.get("scale", 1000))
        self.output_scale = self.scale
        self.output_names = [f"{self.metric}-decile{k}" for k in range(11)]

    def refresh_blocks(self, now_ns: int):
        jobs = self.ctx.query.jobs(now_ns)
        blocks, skipped = build_job_blocks(
            self.ctx.registry.tree(), self.config.template, jobs,
            self.job_prefix, self.output_names)
        for job_id, reason in skipped:
            log.warning("%s: job %s skipped: %s", self.config.name, job_id, reason)
        return blocks

    def resolve_job_block(self, job_id: str, now_ns: int) -> Block | None:
        for job in self.ctx.query.jobs(now_ns):
            if job.job_id == job_id:
                blocks, _ = build_job_blocks(
                    self.ctx.registry.tree(), self.config.template, [job],
                    self.job_prefix, self.output_names)
                return blocks[0] if blocks else None
        return None

    def compute_block(self, block: Block, now_ns: int) -> list[OutputSample]:
        values = []
        for t in block.input_topics:
            latest = self.ctx.query.latest(t.path)
            if latest is not None:
                values.append(latest.value / self.input_scale)
        if not values:
            return []
        qs = deciles(values)
        return [OutputSample(t.path, int(round(q * self.scale)))
                for t, q in zip(block.output_topics, qs)]
