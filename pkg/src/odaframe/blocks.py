"""Blocks, block templates and sensor expressions.

A sensor expression names a sensor by its last topic segment plus a vertical
tree level and an optional horizontal regex filter, e.g.::

    <topdown+1>power
    <bottomup, filter cpu>cpu-cycles

Its *domain* is the set of topics it matches in a tree. A block template is
a set of input and output expressions; instantiating it against a tree
creates one block per node owning an output-domain topic, then resolves
every expression for each block.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .sensors import Topic
from .tree import LevelSpec, SensorTree, TreeNode, hierarchically_related


class ExpressionParseError(ValueError):
    """Malformed sensor expression; ``column`` is the 0-based offense position."""

    def __init__(self, message: str, column: int):
        super().__init__(f"{message} (column {column})")
        self.column = column


class InstantiationError(ValueError):
    """Template produced no blocks; ``reasons`` maps block name to cause."""

    def __init__(self, message: str, reasons: dict[str, str] | None = None):
        super().__init__(message)
        self.reasons = reasons or {}


@dataclass(frozen=True)
class SensorExpression:
    """Level + optional filter + sensor name."""

    level: LevelSpec
    sensor_name: str
    filter: str | None = None

    def __post_init__(self) -> None:
        if not self.sensor_name or "/" in self.sensor_name:
            raise ValueError(f"bad sensor name: {self.sensor_name!r}")
        if self.filter is not None:
            re.compile(self.filter)

    def __str__(self) -> str:
        inner = str(self.level)
        if self.filter is not None:
            inner += f", filter {self.filter}"
        return f"<{inner}>{self.sensor_name}"


_LEVEL_RE = re.compile(r"(topdown|bottomup)([+-]\d+)?")


def parse_expression(text: str) -> SensorExpression:
    """Parse ``<LEVEL[, filter REGEX]>NAME`` (whitespace after commas tolerated)."""
    if not text.startswith("<"):
        raise ExpressionParseError("expected '<'", 0)
    close = text.find(">")
    if close < 0:
        raise ExpressionParseError("missing '>'", len(text))
    inner = text[1:close]
    m = _LEVEL_RE.match(inner)
    if m is None:
        raise ExpressionParseError("expected 'topdown' or 'bottomup'", 1)
    level = LevelSpec(m.group(1), int(m.group(2) or 0))
    rest = inner[m.end():]
    filt = None
    if rest:
        if not rest.startswith(","):
            raise ExpressionParseError("expected ',' or '>' after level", 1 + m.end())
        rest = rest[1:].lstrip()
        filt_at = close - len(rest)
        if not rest.startswith("filter "):
            raise ExpressionParseError("expected 'filter ' after ','", filt_at)
        filt = rest[len("filter "):].strip()
        if not filt:
            raise ExpressionParseError("empty filter regex", close)
        try:
            re.compile(filt)
        except re.error as exc:
            raise ExpressionParseError(f"bad filter regex: {exc}", filt_at) from None
    name = text[close + 1:]
    if not name:
        raise ExpressionParseError("missing sensor name after '>'", close + 1)
    if "/" in name:
        raise ExpressionParseError("sensor name must not contain '/'", close + 1 + name.index("/"))
    return SensorExpression(level=level, sensor_name=name, filter=filt)


@dataclass(frozen=True)
class BlockTemplate:
    """Generic block description.

    Output expressions drive tree-based block creation, so they must be
    present for ``instantiate_blocks``; job operators build their blocks
    from job metadata instead and may carry input expressions only.
    """

    inputs: tuple[SensorExpression, ...]
    outputs: tuple[SensorExpression, ...] = ()
    operator_outputs: tuple[str, ...] = ()

    @classmethod
    def from_text(cls, inputs: list[str], outputs: list[str],
                  operator_outputs: list[str] | None = None) -> "BlockTemplate":
        return cls(
            inputs=tuple(parse_expression(t.strip()) for t in inputs),
            outputs=tuple(parse_expression(t.strip()) for t in outputs),
            operator_outputs=tuple(operator_outputs or ()),
        )


@dataclass(frozen=True)
class Block:
    """Resolved analysis container rooted at one tree node."""

    name: str  # node path, trailing slash
    input_topics: tuple[Topic, ...]
    output_topics: tuple[Topic, ...]


def _level_nodes(tree: SensorTree, expr: SensorExpression) -> list[TreeNode]:
    """Nodes at the expression's level whose path passes the filter."""
    nodes = tree.nodes_at_level(expr.level)
    if expr.filter is None:
        return nodes
    rx = re.compile(expr.filter)
    return [n for n in nodes if rx.search(n.path)]


def expression_domain(tree: SensorTree, expr: SensorExpression) -> list[Topic]:
    """Existing leaves matched by the expression, sorted by path."""
    out = [n.sensors[expr.sensor_name]
           for n in _level_nodes(tree, expr)
           if expr.sensor_name in n.sensors]
    out.sort(key=lambda t: t.path)
    return out


def declared_domain(tree: SensorTree, expr: SensorExpression) -> list[tuple[TreeNode, Topic]]:
    """Output-side domain: one declared topic per matching node.

    Output sensors deliver analysis results, so they need not pre-exist;
    the topic is synthesized under each node at the expression's level.
    """
    out = [(n, n.sensors.get(expr.sensor_name) or Topic(n.path + expr.sensor_name))
           for n in _level_nodes(tree, expr)]
    out.sort(key=lambda pair: pair[0].path)
    return out


def resolve_for_block(tree: SensorTree, expr: SensorExpression,
                      block_node: TreeNode) -> list[Topic]:
    """Subset of the expression's domain hierarchically related to the block node."""
    out = [n.sensors[expr.sensor_name]
           for n in _level_nodes(tree, expr)
           if expr.sensor_name in n.sensors and hierarchically_related(n, block_node)]
    out.sort(key=lambda t: t.path)
    return out


@dataclass
class Instantiation:
    """Result of instantiating a template: built blocks plus skip reasons."""

    blocks: list[Block] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)


def instantiate_blocks(tree: SensorTree, template: BlockTemplate) -> Instantiation:
    """Create one block per node owning an output-domain topic.

    Step 1: compute the union of the output expressions' domains.
    Step 2: create one block per distinct owning node (merging output
    expressions that land on the same node).
    Step 3: resolve every input and output expression per block; a block
    whose input expression resolves to nothing is skipped with a reason.

    Raises InstantiationError when no block can be built.
    """
    if not template.outputs:
        raise InstantiationError("template has no output expressions")
    per_node: dict[str, tuple[TreeNode, list[Topic]]] = {}
    for expr in template.outputs:
        for node, topic in declared_domain(tree, expr):
            entry = per_node.setdefault(node.path, (node, []))
            if topic not in entry[1]:
                entry[1].append(topic)
    if not per_node:
        raise InstantiationError("output expressions matched no tree node")

    result = Instantiation()
    for name in sorted(per_node):
        node, outputs = per_node[name]
        inputs: list[Topic] = []
        skip_reason = None
        for expr in template.inputs:
            resolved = resolve_for_block(tree, expr, node)
            if not resolved:
                skip_reason = f"input {expr} resolved to no topic"
                break
            for t in resolved:
                if t not in inputs:
                    inputs.append(t)
        if skip_reason is not None:
            result.skipped.append((name, skip_reason))
            continue
        if not inputs:
            result.skipped.append((name, "template has no input expressions"))
            continue
        result.blocks.append(Block(
            name=name,
            input_topics=tuple(inputs),
            output_topics=tuple(outputs),
        ))
    if not result.blocks:
        raise InstantiationError(
            "no block could be built",
            reasons=dict(result.skipped) or {"*": "output domain empty"},
        )
    return result
