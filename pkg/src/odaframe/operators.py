"""Operator framework: plugin lifecycle, scheduling and block management.

An *operator* is a configured computation over a set of blocks. Online
operators are ticked periodically by a worker pool; on-demand operators run
only when explicitly invoked and their outputs are returned to the caller
instead of being published. With the ``sequential`` arrangement one
schedulable instance owns all blocks and processes them in order; with
``parallel`` one instance is created per block so blocks can be computed
concurrently.

Plugins are compiled in and selected by name; each declares how to turn its
configuration section into blocks (through the block engine) and how to
compute one block.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from queue import Empty, Queue
from typing import Callable

from .blocks import Block, BlockTemplate, instantiate_blocks
from .jobs import JobInfo
from .query import QueryEngine
from .registry import SensorRegistry
from .sensors import SensorReading
from .tree import SensorTree

log = logging.getLogger(__name__)

OPERATOR_TOPIC_PREFIX = "/_operators"  # home of operator-level outputs


class UnknownPluginError(KeyError):
    pass


class UnknownOperatorError(KeyError):
    pass


class UnknownBlockError(KeyError):
    pass


class WrongModeError(RuntimeError):
    """On-demand invocation of an online operator (or vice versa)."""


class UnknownActionError(KeyError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class OperatorConfig:
    plugin: str
    name: str
    mode: str = "online"              # "online" | "on-demand"
    interval_ms: int = 1000
    arrangement: str = "sequential"   # "sequential" | "parallel"
    streaming: bool = True
    template: BlockTemplate | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mode not in ("online", "on-demand"):
            raise ConfigError(f"{self.name}: bad mode {self.mode!r}")
        if self.arrangement not in ("sequential", "parallel"):
            raise ConfigError(f"{self.name}: bad arrangement {self.arrangement!r}")
        if self.mode == "online" and self.interval_ms <= 0:
            raise ConfigError(f"{self.name}: interval_ms must be > 0")

    @property
    def interval_ns(self) -> int:
        return self.interval_ms * 1_000_000

    @classmethod
    def from_dict(cls, plugin: str, d: dict) -> "OperatorConfig":
        if "name" not in d:
            raise ConfigError(f"operator section for {plugin} needs a name")
        template = None
        if "template" in d:
            t = d["template"]
            try:
                template = BlockTemplate.from_text(
                    inputs=t.get("input", []),
                    outputs=t.get("output", []),
                    operator_outputs=t.get("operator_output", []),
                )
            except ValueError as exc:
                raise ConfigError(f"{d['name']}: bad template: {exc}") from None
        known = {"name", "mode", "interval_ms", "arrangement", "streaming",
                 "template", "params"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"{d['name']}: unknown keys {sorted(unknown)}")
        return cls(
            plugin=plugin,
            name=str(d["name"]),
            mode=d.get("mode", "online"),
            interval_ms=int(d.get("interval_ms", 1000)),
            arrangement=d.get("arrangement", "sequential"),
            streaming=bool(d.get("streaming", True)),
            template=template,
            params=dict(d.get("params", {})),
        )


@dataclass(frozen=True)
class OutputSample:
    """One output value produced by a compute, already in integer encoding."""

    topic: str
    value: int


@dataclass
class PluginContext:
    """Daemon facilities handed to plugins."""

    query: QueryEngine
    registry: SensorRegistry
    emit: Callable[[str, SensorReading, bool], None]
    clock_ns: Callable[[], int] = time.time_ns


class OperatorPlugin:
    """Base class for operator plugins.

    Subclasses override ``compute_block`` (and optionally ``tick`` for
    whole-operator computations), declare custom ``actions`` and may refresh
    their block set per tick (job operators).
    """

    plugin_name = "base"
    actions: tuple[str, ...] = ()
    is_job_operator = False
    output_scale = 1

    def __init__(self, config: OperatorConfig, ctx: PluginContext):
        self.config = config
        self.ctx = ctx

    # -- block management -----------------------------------------------------

    def build_blocks(self, tree: SensorTree) -> tuple[list[Block], list[tuple[str, str]]]:
        """Default: instantiate the configured template against the tree."""
        if self.config.template is None:
            raise ConfigError(f"{self.config.name}: plugin requires a template")
        inst = instantiate_blocks(tree, self.config.template)
        return inst.blocks, inst.skipped

    def refresh_blocks(self, now_ns: int) -> list[Block] | None:
        """Job operators return a fresh block set each tick; others None."""
        return None

    def resolve_job_block(self, job_id: str, now_ns: int) -> Block | None:
        """Build the block for one named job on demand (job operators only)."""
        return None

    def operator_output_topic(self, name: str) -> str:
        return f"{OPERATOR_TOPIC_PREFIX}/{self.config.name}/{name}"

    # -- compute ----------------------------------------------------------------

    def compute_block(self, block: Block, now_ns: int) -> list[OutputSample]:
        raise NotImplementedError

    def tick(self, blocks: list[Block], now_ns: int) -> list[OutputSample]:
        """Process blocks in order; one block's failure never hits the others."""
        out: list[OutputSample] = []
        for block in blocks:
            try:
                out.extend(self.compute_block(block, now_ns))
            except Exception:
                log.exception("%s: compute failed for block %s",
                              self.config.name, block.name)
        return out

    # -- control -----------------------------------------------------------------

    def custom_action(self, action: str, params: dict) -> str:
        raise UnknownActionError(action)

    def status_text(self) -> str:
        return ""


@dataclass
class OperatorInstance:
    """One schedulable unit: all blocks (sequential) or a single block (parallel)."""

    operator: "Operator"
    index: int
    blocks: list[Block]
    lock: threading.Lock = field(default_factory=threading.Lock)
    next_fire_ns: int = 0
    ticks_run: int = 0
    ticks_skipped: int = 0


class Operator:
    def __init__(self, config: OperatorConfig, plugin: OperatorPlugin,
                 blocks: list[Block], skipped: list[tuple[str, str]]):
        self.config = config
        self.plugin = plugin
        self.skipped = skipped
        self.state = "stopped"
        if config.arrangement == "parallel":
            self.instances = [OperatorInstance(self, i, [b])
                              for i, b in enumerate(blocks)]
        else:
            self.instances = [OperatorInstance(self, 0, list(blocks))]

    @property
    def blocks(self) -> list[Block]:
        return [b for inst in self.instances for b in inst.blocks]

    def find_block(self, name: str) -> tuple[OperatorInstance, Block] | None:
        want = name if name.endswith("/") else name + "/"
        for inst in self.instances:
            for b in inst.blocks:
                if b.name == want or b.name == name:
                    return inst, b
        return None


@dataclass
class LoadReport:
    plugin: str
    operators: list[dict] = field(default_factory=list)


class OperatorManager:
    """Loads plugins, owns operator lifecycle and runs the tick scheduler."""

    def __init__(self, ctx: PluginContext, workers: int = 4):
        from .plugins import create_plugin, plugin_known  # local to avoid cycle
        self._create_plugin = create_plugin
        self._plugin_known = plugin_known
        self.ctx = ctx
        self.workers = workers
        self._plugins: dict[str, dict[str, Operator]] = {}
        self._lock = threading.Lock()
        self._scheduler: _TickScheduler | None = None
        self.epoch_ns = ctx.clock_ns()

    # -- loading -----------------------------------------------------------------

    def load_plugin(self, plugin_name: str, sections: list[dict]) -> LoadReport:
        """Instantiate one operator per config section; replaces a loaded plugin."""
        if not self._plugin_known(plugin_name):
            raise UnknownPluginError(plugin_name)
        if not sections:
            raise ConfigError(f"{plugin_name}: no operator sections")
        operators: dict[str, Operator] = {}
        report = LoadReport(plugin=plugin_name)
        for section in sections:
            cfg = OperatorConfig.from_dict(plugin_name, section)
            if cfg.name in operators:
                raise ConfigError(f"duplicate operator name {cfg.name!r}")
            plugin = self._create_plugin(plugin_name, cfg, self.ctx)
            if plugin.is_job_operator:
                blocks, skipped = [], []
            else:
                # Fresh tree per section: outputs declared by earlier
                # sections are inputs for later ones (pipelines).
                blocks, skipped = plugin.build_blocks(self.ctx.registry.tree())
            op = Operator(cfg, plugin, blocks, skipped)
            self._register_outputs(op)
            operators[cfg.name] = op
            report.operators.append({
                "name": cfg.name,
                "blocks": len(blocks),
                "skipped": [{"block": b, "reason": r} for b, r in skipped],
            })
        with self._lock:
            previous = self._plugins.get(plugin_name)
        if previous:
            for op in previous.values():
                self._stop_operator(op)
        with self._lock:
            self._plugins[plugin_name] = operators
        return report

    def _register_outputs(self, op: Operator) -> None:
        scale = op.plugin.output_scale
        for block in op.blocks:
            for t in block.output_topics:
                self.ctx.registry.register(t.path, scale=scale)
        template = op.config.template
        if template is not None:
            for name in template.operator_outputs:
                self.ctx.registry.register(
                    op.plugin.operator_output_topic(name), scale=scale)

    # -- lookup --------------------------------------------------------------------

    def operator(self, plugin_name: str, op_name: str) -> Operator:
        with self._lock:
            ops = self._plugins.get(plugin_name)
            if ops is None:
                raise UnknownPluginError(plugin_name)
            op = ops.get(op_name)
            if op is None:
                raise UnknownOperatorError(f"{plugin_name}/{op_name}")
            return op

    def describe(self) -> dict:
        with self._lock:
            return {
                plugin: {
                    name: {
                        "state": op.state,
                        "mode": op.config.mode,
                        "arrangement": op.config.arrangement,
                        "blocks": [b.name for b in op.blocks],
                        "status": op.plugin.status_text(),
                        "ticks_run": sum(i.ticks_run for i in op.instances),
                        "ticks_skipped": sum(i.ticks_skipped for i in op.instances),
                    }
                    for name, op in ops.items()
                }
                for plugin, ops in self._plugins.items()
            }

    # -- lifecycle -------------------------------------------------------------------

    def start(self, plugin_name: str, op_name: str) -> str:
        op = self.operator(plugin_name, op_name)
        if op.state == "running":
            return "already-running"
        now = self.ctx.clock_ns()
        interval = op.config.interval_ns
        for inst in op.instances:
            # Align ticks to interval multiples counted from manager start.
            elapsed = max(0, now - self.epoch_ns)
            inst.next_fire_ns = self.epoch_ns + (elapsed // interval + 1) * interval
        op.state = "running"
        return "running"

    def stop(self, plugin_name: str, op_name: str) -> str:
        op = self.operator(plugin_name, op_name)
        self._stop_operator(op)
        return "stopped"

    def _stop_operator(self, op: Operator) -> None:
        op.state = "stopped"
        for inst in op.instances:
            # Wait for any in-flight compute to finish.
            inst.lock.acquire()
            inst.lock.release()

    def stop_all(self) -> None:
        with self._lock:
            all_ops = [op for ops in self._plugins.values() for op in ops.values()]
        for op in all_ops:
            self._stop_operator(op)

    # -- tick execution ---------------------------------------------------------------

    def run_instance(self, inst: OperatorInstance, now_ns: int,
                     wait: bool = True) -> bool:
        """Run one instance's compute; returns False when skipped on exclusion."""
        op = inst.operator
        acquired = inst.lock.acquire() if wait else inst.lock.acquire(blocking=False)
        if not acquired:
            inst.ticks_skipped += 1
            return False
        try:
            if op.state != "running":
                return False
            if op.plugin.is_job_operator and inst.index == 0:
                fresh = op.plugin.refresh_blocks(now_ns)
                if fresh is not None:
                    inst.blocks = fresh
                    self._register_outputs(op)
            samples = op.plugin.tick(inst.blocks, now_ns)
            for s in samples:
                self.ctx.emit(s.topic, SensorReading(value=s.value, timestamp=now_ns),
                              op.config.streaming)
            inst.ticks_run += 1
            return True
        finally:
            inst.lock.release()

    def tick_operator(self, plugin_name: str, op_name: str, now_ns: int) -> None:
        """Synchronously tick every instance of one online operator."""
        op = self.operator(plugin_name, op_name)
        if op.config.mode != "online":
            raise WrongModeError(f"{op_name} is not an online operator")
        for inst in op.instances:
            self.run_instance(inst, now_ns)

    def tick_all(self, now_ns: int) -> None:
        """Deterministic synchronous tick of all running online operators.

        Drives the virtual-clock harness; plugin load order defines the
        in-tick execution order, making pipelines reproducible.
        """
        with self._lock:
            plugins = list(self._plugins.items())
        for _, ops in plugins:
            for op in ops.values():
                if op.state == "running" and op.config.mode == "online":
                    for inst in op.instances:
                        self.run_instance(inst, now_ns)

    # -- on-demand and custom actions ----------------------------------------------------

    def on_demand(self, plugin_name: str, op_name: str,
                  block_name: str) -> list[tuple[str, SensorReading]]:
        """Compute one block now; outputs are returned, never published."""
        op = self.operator(plugin_name, op_name)
        if op.config.mode != "on-demand":
            raise WrongModeError(f"{op_name} is not an on-demand operator")
        now = self.ctx.clock_ns()
        found = op.find_block(block_name)
        if found is None and op.plugin.is_job_operator:
            block = op.plugin.resolve_job_block(block_name, now)
            if block is not None:
                found = (op.instances[0], block)
        if found is None:
            raise UnknownBlockError(block_name)
        inst, block = found
        with inst.lock:
            samples = op.plugin.compute_block(block, now)
        return [(s.topic, SensorReading(value=s.value, timestamp=now))
                for s in samples]

    def custom_action(self, plugin_name: str, op_name: str, action: str,
                      params: dict | None = None) -> str:
        op = self.operator(plugin_name, op_name)
        if action not in op.plugin.actions:
            raise UnknownActionError(f"{op_name} does not declare {action!r}")
        return op.plugin.custom_action(action, params or {})

    # -- real-time scheduling ---------------------------------------------------------------

    def start_scheduler(self) -> None:
        if self._scheduler is None:
            self._scheduler = _TickScheduler(self, self.workers)
            self._scheduler.start()

    def stop_scheduler(self) -> None:
        if self._scheduler is not None:
            self._scheduler.stop()
            self._scheduler = None

    def _due_instances(self, now_ns: int) -> list[tuple[OperatorInstance, int]]:
        due = []
        with self._lock:
            plugins = list(self._plugins.values())
        for ops in plugins:
            for op in ops.values():
                if op.state != "running" or op.config.mode != "online":
                    continue
                interval = op.config.interval_ns
                for inst in op.instances:
                    if now_ns >= inst.next_fire_ns:
                        due.append((inst, inst.next_fire_ns))
                        # Catch up to the next future multiple; a stall is
                        # one skipped tick, not a burst.
                        behind = (now_ns - inst.next_fire_ns) // interval
                        if behind:
                            inst.ticks_skipped += behind
                        inst.next_fire_ns += (behind + 1) * interval
        return due


class _TickScheduler:
    def __init__(self, manager: OperatorManager, workers: int):
        self.manager = manager
        self._queue: Queue = Queue()
        self._stop = threading.Event()
        self._threads = [
            threading.Thread(target=self._worker, name=f"oda-worker-{i}", daemon=True)
            for i in range(workers)
        ]
        self._dispatcher = threading.Thread(
            target=self._dispatch, name="oda-scheduler", daemon=True)

    def start(self) -> None:
        for t in self._threads:
            t.start()
        self._dispatcher.start()

    def stop(self) -> None:
        self._stop.set()
        self._dispatcher.join(timeout=2)
        for t in self._threads:
            t.join(timeout=2)

    def _dispatch(self) -> None:
        while not self._stop.is_set():
            now = self.manager.ctx.clock_ns()
            for inst, fire_ns in self.manager._due_instances(now):
                self._queue.put((inst, fire_ns))
            time.sleep(0.005)

    def _worker(self) -> None:
        while not self._stop.is_set():
            try:
                inst, fire_ns = self._queue.get(timeout=0.1)
            except Empty:
                continue
            try:
                self.manager.run_instance(inst, fire_ns, wait=False)
            except Exception:
                log.exception("tick failed for %s", inst.operator.config.name)


def build_job_blocks(tree: SensorTree, template: BlockTemplate,
                     jobs: list[JobInfo], output_prefix: str,
                     output_names: list[str]) -> tuple[list[Block], list[tuple[str, str]]]:
    """One block per job: template inputs resolved against every job node.

    Outputs live under ``<output_prefix>/<job_id>/<name>`` since a job is a
    logical entity without a home in the sensor tree.
    """
    from .blocks import resolve_for_block
    from .sensors import Topic

    blocks: list[Block] = []
    skipped: list[tuple[str, str]] = []
    for job in jobs:
        inputs: list[Topic] = []
        for node_path in job.node_list:
            node = tree.node_at(node_path)
            if node is None:
                continue
            for expr in template.inputs:
                for t in resolve_for_block(tree, expr, node):
                    if t not in inputs:
                        inputs.append(t)
        if not inputs:
            skipped.append((job.job_id, "no resolvable inputs on the job's nodes"))
            continue
        outputs = tuple(Topic(f"{output_prefix}/{job.job_id}/{n}") for n in output_names)
        blocks.append(Block(name=job.job_id, input_topics=tuple(inputs),
                            output_topics=outputs))
    return blocks, skipped
