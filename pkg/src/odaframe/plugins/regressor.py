"""Online regression plugin: predicts a target sensor one interval ahead.

Per tick and block, each input sensor's recent window is summarized into
five statistics (mean, population std, min, max, last) and the
concatenated feature vector drives a random forest. Feature/response
pairs are accumulated until the configured training-set size is reached,
at which point the model is trained once and shared by all blocks of the
operator. A ``train`` action forces (re)training earlier.

Outputs are written in fixed-point (x1000) integer encoding.
"""

from __future__ import annotations

import statistics
import threading
from dataclasses import dataclass

from ..blocks import Block
from ..operators import ConfigError, OperatorPlugin, OutputSample
from ..sensors import SensorReading
from .forest import ForestParams, NotTrainedError, RandomForest

STATS_PER_INPUT = 5
FIXED_POINT_SCALE = 1000


class SkipTick(Exception):
    """Raised when a block's inputs cannot produce a feature vector yet."""


def window_features(windows: list[list[SensorReading]]) -> list[float]:
    """Fixed-order statistics per input window, concatenated."""
    feats: list[float] = []
    for readings in windows:
        if not readings:
            raise SkipTick("empty input window")
        values = [float(r.value) for r in readings]
        feats.extend((
            statistics.fmean(values),
            statistics.pstdev(values),
            min(values),
            max(values),
            values[-1],
        ))
    return feats


@dataclass
class _Pending:
    features: list[float]
    tick_ns: int


class RegressorPlugin(OperatorPlugin):
    plugin_name = "regressor"
    actions = ("train",)
    output_scale = FIXED_POINT_SCALE

    def __init__(self, config, ctx):
        super().__init__(config, ctx)
        p = config.params
        if "target" not in p:
            raise ConfigError(f"{config.name}: regressor needs params.target")
        from ..blocks import parse_expression
        self.target_expr = parse_expression(p["target"])
        self.window_intervals = int(p.get("window_intervals", 4))
        self.training_set_size = int(p.get("training_set_size", 2000))
        self.min_train_size = int(p.get("min_train_size", 50))
        self.seed = int(p.get("seed", 1))
        self.forest_params = ForestParams(
            n_trees=int(p.get("n_trees", 32)),
            max_depth=int(p.get("max_depth", 12)),
            min_samples_leaf=int(p.get("min_samples_leaf", 1)),
            max_features=(int(p["max_features"]) if "max_features" in p else None),
            bootstrap_ratio=float(p.get("bootstrap_ratio", 1.0)),
        )
        self.model = RandomForest(self.forest_params, seed=self.seed)
        self.pairs: list[tuple[list[float], float]] = []
        self.alignment_rejects = 0
        self._pending: dict[str, _Pending] = {}
        self._targets: dict[str, str] = {}
        self._state_lock = threading.Lock()
        self._err_ema: float | None = None

    # -- wiring ---------------------------------------------------------------

    def build_blocks(self, tree):
        from ..blocks import InstantiationError, resolve_for_block
        blocks, skipped = super().build_blocks(tree)
        kept = []
        for b in blocks:
            node = tree.node_at(b.name)
            targets = resolve_for_block(tree, self.target_expr, node)
            if len(targets) != 1:
                skipped.append((b.name, f"target {self.target_expr} resolved to "
                                        f"{len(targets)} topics, need exactly 1"))
                continue
            self._targets[b.name] = targets[0].path
            kept.append(b)
        if not kept:
            raise InstantiationError("no block has a uniquely resolvable target",
                                     dict(skipped))
        return kept, skipped

    # -- compute ----------------------------------------------------------------

    def compute_block(self, block: Block, now_ns: int) -> list[OutputSample]:
        interval_ns = self.config.interval_ns
        windows = [self.ctx.query.window(t.path, self.window_intervals * interval_ns)
                   for t in block.input_topics]
        try:
            feats = window_features(windows)
        except SkipTick:
            with self._state_lock:
                self._pending.pop(block.name, None)
            return []

        target_topic = self._targets[block.name]
        latest_target = self.ctx.query.latest(target_topic)
        with self._state_lock:
            pending = self._pending.get(block.name)
            if pending is not None and latest_target is not None:
                # The response must be the target one interval after the
                # features were taken; anything else is a misalignment.
                if latest_target.timestamp == pending.tick_ns + interval_ns:
                    self._observe(pending.features, float(latest_target.value))
                else:
                    self.alignment_rejects += 1
            self._pending[block.name] = _Pending(feats, now_ns)

        out: list[OutputSample] = []
        try:
            predicted = self.model.predict(feats)
        except NotTrainedError:
            return out
        value = int(round(predicted * FIXED_POINT_SCALE))
        out.extend(OutputSample(t.path, value) for t in block.output_topics)
        self._update_error(predicted, latest_target, out, now_ns)
        return out

    def _observe(self, features: list[float], response: float) -> None:
        if self.model.trained:
            return
        self.pairs.append((features, response))
        if len(self.pairs) >= self.training_set_size:
            self._train()

    def _train(self) -> None:
        X = [f for f, _ in self.pairs]
        y = [r for _, r in self.pairs]
        self.model = RandomForest(self.forest_params, seed=self.seed).fit(X, y)

    def _update_error(self, predicted, latest_target, out, now_ns):
        # Rolling relative error vs the freshest actual, exposed as an
        # operator-level sensor when configured.
        template = self.config.template
        if latest_target is None or not template or not template.operator_outputs:
            return
        actual = float(latest_target.value)
        if actual == 0.0:
            return
        rel = abs(predicted - actual) / abs(actual)
        self._err_ema = rel if self._err_ema is None else \
            0.95 * self._err_ema + 0.05 * rel
        for name in template.operator_outputs:
            out.append(OutputSample(
                self.operator_output_topic(name),
                int(round(self._err_ema * FIXED_POINT_SCALE))))

    # -- control -------------------------------------------------------------------

    def custom_action(self, action: str, params: dict) -> str:
        if action != "train":
            return super().custom_action(action, params)
        with self._state_lock:
            if len(self.pairs) < self.min_train_size:
                return (f"not-enough-data ({len(self.pairs)} pairs, "
                        f"minimum {self.min_train_size})")
            self._train()
            return "trained"

    def status_text(self) -> str:
        if self.model.trained:
            return "trained"
        return f"training ({len(self.pairs)}/{self.training_set_size} pairs)"
