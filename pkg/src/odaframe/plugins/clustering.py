"""Node-behavior clustering over window-averaged sensors.

One block per node; every tick each block's input sensors are averaged
over the aggregation window and the resulting points (one per block) are
fed to a Bayesian Gaussian mixture. Each block's output sensor carries the
cluster label of its node, or -1 when the point's density falls below the
outlier threshold in all fitted components. Requires the sequential
arrangement since the fit spans all blocks.
"""

from __future__ import annotations

import threading

from ..blocks import Block
from ..operators import ConfigError, OperatorPlugin, OutputSample
from ..sensors import NS_PER_S
from . import vbgmm


class ClusteringPlugin(OperatorPlugin):
    plugin_name = "clustering"
    actions = ("reassign",)
    output_scale = 1

    def __init__(self, config, ctx):
        super().__init__(config, ctx)
        if config.arrangement != "sequential":
            raise ConfigError(f"{config.name}: clustering requires the "
                              f"sequential arrangement (fit spans all blocks)")
        p = config.params
        self.k_max = int(p.get("k_max", 8))
        self.threshold = float(p.get("outlier_threshold", 0.001))
        self.window_ns = int(float(p.get("window_s", 3600)) * NS_PER_S)
        self.seed = int(p.get("seed", 1))
        # z-score the points before fitting; densities (and the outlier
        # threshold) are then in normalized units, independent of sensor scale
        self.normalize = bool(p.get("normalize", False))
        self.concentration = (float(p["concentration"])
                              if "concentration" in p else None)
        self.model: vbgmm.MixtureModel | None = None
        self._norm: tuple[list[float], list[float]] | None = None
        self._lock = threading.Lock()
        self._blocks: list[Block] = []

    def _block_point(self, block: Block) -> list[float] | None:
        point = []
        for t in block.input_topics:
            readings = self.ctx.query.window(t.path, self.window_ns)
            if not readings:
                return None
            scale = self.ctx.query.scale_of(t.path)
            point.append(sum(r.value for r in readings) / len(readings) / scale)
        return point

    def _fit_normalization(self, points: list[list[float]]) -> None:
        if not self.normalize:
            self._norm = None
            return
        dims = len(points[0])
        mu = [sum(p[i] for p in points) / len(points) for i in range(dims)]
        sd = []
        for i in range(dims):
            var = sum((p[i] - mu[i]) ** 2 for p in points) / len(points)
            sd.append(max(var ** 0.5, 1e-9))
        self._norm = (mu, sd)

    def _apply_norm(self, point: list[float]) -> list[float]:
        if self._norm is None:
            return point
        mu, sd = self._norm
        return [(x - m) / s for x, m, s in zip(point, mu, sd)]

    def tick(self, blocks: list[Block], now_ns: int) -> list[OutputSample]:
        self._blocks = blocks
        points, with_point = [], []
        for block in blocks:
            point = self._block_point(block)
            if point is not None:
                points.append(point)
                with_point.append(block)
        if len(points) < self.k_max:
            return []
        with self._lock:
            self._fit_normalization(points)
            scaled = [self._apply_norm(p) for p in points]
            self.model = vbgmm.fit_mixture(
                scaled, self.k_max, concentration=self.concentration,
                seed=self.seed)
            out = []
            for block, point in zip(with_point, scaled):
                label = vbgmm.assign(self.model, point, self.threshold)
                out.extend(OutputSample(t.path, label) for t in block.output_topics)
        return out

    def compute_block(self, block: Block, now_ns: int) -> list[OutputSample]:
        """On-demand path: label one block against the current model."""
        with self._lock:
            if self.model is None:
                return []
            point = self._block_point(block)
            if point is None:
                return []
            label = vbgmm.assign(self.model, self._apply_norm(point), self.threshold)
        return [OutputSample(t.path, label) for t in block.output_topics]

    def custom_action(self, action: str, params: dict) -> str:
        if action != "reassign":
            return super().custom_action(action, params)
        samples = self.tick(self._blocks, self.ctx.clock_ns())
        for s in samples:
            from ..sensors import SensorReading
            self.ctx.emit(s.topic, SensorReading(value=s.value,
                                                 timestamp=self.ctx.clock_ns()),
                          self.config.streaming)
        return f"reassigned {len(samples)} labels"

    def status_text(self) -> str:
        if self.model is None:
            return "collecting"
        return f"fitted ({self.model.n_effective} effective components)"
