"""Hierarchical sensor tree over slash-separated topics.

Internal nodes are system components (racks, chassis, servers, CPUs),
leaves are sensors. Level numbering excludes the root: ``topdown+0`` is
depth 1 (children of the root) and ``bottomup-0`` is the deepest internal
level. Custom naming conventions are supported through hierarchy schemes:
an ordered list of regular expressions, one per tree level.

Trees are immutable after build and replaced wholesale when the topic set
changes, so they can be shared freely across threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .sensors import Topic


class EmptyTreeError(ValueError):
    """No topic survived the build."""


@dataclass(frozen=True, slots=True)
class LevelSpec:
    """Vertical tree position: ``topdown``/``bottomup`` anchor plus offset.

    ``topdown+k`` resolves to absolute depth 1+k, ``bottomup-k`` to
    depth_max-k. Offsets are signed; a resolved depth outside the tree is
    simply an empty level.
    """

    anchor: str  # "topdown" | "bottomup"
    offset: int = 0

    def __post_init__(self) -> None:
        if self.anchor not in ("topdown", "bottomup"):
            raise ValueError(f"bad level anchor: {self.anchor!r}")

    def resolve_depth(self, depth_max: int) -> int:
        if self.anchor == "topdown":
            return 1 + self.offset
        return depth_max + self.offset

    def __str__(self) -> str:
        if self.offset == 0:
            return self.anchor
        return f"{self.anchor}{self.offset:+d}"


@dataclass(frozen=True)
class HierarchySpec:
    """Ordered per-level regexes segmenting topics into tree levels."""

    level_patterns: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.level_patterns:
            raise ValueError("hierarchy spec needs at least one level pattern")
        for p in self.level_patterns:
            re.compile(p)

    def split(self, path: str) -> list[str]:
        """Segment ``path`` into per-level node labels plus the sensor name.

        Patterns are applied left to right, each anchored at the current
        position (longest match per level). Every level must start at a
        segment boundary so that labels joined back with '/' reproduce the
        topic exactly; the residue after the last level must be a single
        ``/name`` segment. Raises ValueError on mismatch.
        """
        pos = 0
        labels = []
        for pat in self.level_patterns:
            m = re.compile(pat).match(path, pos)
            if m is None or m.end() == pos:
                raise ValueError(f"level pattern {pat!r} does not match at offset {pos}")
            matched = path[pos:m.end()]
            if not matched.startswith("/") or matched.endswith("/"):
                raise ValueError(
                    f"level pattern {pat!r} must consume whole '/…' segments, got {matched!r}")
            labels.append(matched[1:])
            pos = m.end()
        residue = path[pos:]
        if not re.fullmatch(r"/[^/]+", residue):
            raise ValueError(f"unmatched residue {residue!r} after level patterns")
        labels.append(residue[1:])
        return labels


@dataclass
class TreeNode:
    """Internal tree node: one system component."""

    name: str
    parent: "TreeNode | None"
    depth: int
    children: dict[str, "TreeNode"] = field(default_factory=dict)
    sensors: dict[str, Topic] = field(default_factory=dict)

    @property
    def path(self) -> str:
        """Component path with trailing slash, e.g. ``/r03/c02/``; root is ``/``."""
        parts = []
        node = self
        while node.parent is not None:
            parts.append(node.name)
            node = node.parent
        return "/" + "".join(f"{p}/" for p in reversed(parts))

    @property
    def path_segments(self) -> tuple[str, ...]:
        parts = []
        node = self
        while node.parent is not None:
            parts.append(node.name)
            node = node.parent
        return tuple(reversed(parts))

    def __repr__(self) -> str:
        return f"TreeNode({self.path!r})"


class SensorTree:
    """Immutable index of all known sensor topics."""

    def __init__(self) -> None:
        self.root = TreeNode(name="", parent=None, depth=0)
        self.depth_max = 0
        # Topics rejected by the hierarchy spec, as (text, reason) pairs.
        self.rejected: list[tuple[str, str]] = []
        self._nodes_by_depth: dict[int, list[TreeNode]] = {}
        self._by_path: dict[str, TreeNode] = {self.root.path: self.root}

    # -- construction (module-internal; use build_tree) ----------------------

    def _insert(self, labels: list[str]) -> None:
        *placement, sensor = labels
        node = self.root
        for name in placement:
            child = node.children.get(name)
            if child is None:
                child = TreeNode(name=name, parent=node, depth=node.depth + 1)
                node.children[name] = child
            node = child
        topic_path = "/" + "/".join(labels)
        node.sensors[sensor] = Topic(topic_path)

    def _freeze(self) -> None:
        by_depth: dict[int, list[TreeNode]] = {}
        by_path: dict[str, TreeNode] = {self.root.path: self.root}
        stack = list(self.root.children.values())
        depth_max = 0
        while stack:
            node = stack.pop()
            by_depth.setdefault(node.depth, []).append(node)
            by_path[node.path] = node
            depth_max = max(depth_max, node.depth)
            stack.extend(node.children.values())
        for nodes in by_depth.values():
            nodes.sort(key=lambda n: n.path)
        self._nodes_by_depth = by_depth
        self._by_path = by_path
        self.depth_max = depth_max

    # -- navigation -----------------------------------------------------------

    def node_at(self, path: str) -> TreeNode | None:
        """Look up an internal node by component path ('/r03/c02/' or '/r03/c02')."""
        if not path.startswith("/"):
            path = "/" + path
        if not path.endswith("/"):
            path += "/"
        return self._by_path.get(path)

    def nodes_at_level(self, level: LevelSpec) -> list[TreeNode]:
        depth = level.resolve_depth(self.depth_max)
        if depth < 1 or depth > self.depth_max:
            return []
        return list(self._nodes_by_depth.get(depth, ()))

    def level_of(self, node: TreeNode) -> LevelSpec:
        return LevelSpec("topdown", node.depth - 1)

    def iter_nodes(self):
        for depth in sorted(self._nodes_by_depth):
            yield from self._nodes_by_depth[depth]

    def topics(self) -> list[Topic]:
        """All leaf topics, sorted by path."""
        out = [t for n in self.iter_nodes() for t in n.sensors.values()]
        out.extend(self.root.sensors.values())
        out.sort(key=lambda t: t.path)
        return out

    def leaf_count(self) -> int:
        n = len(self.root.sensors)
        for node in self.iter_nodes():
            n += len(node.sensors)
        return n

    def dump(self) -> str:
        """Topic-dump text: one topic per line."""
        return "".join(f"{t.path}\n" for t in self.topics())


def hierarchically_related(a: TreeNode, b: TreeNode) -> bool:
    """True iff one node is an ancestor of the other (or they are equal)."""
    pa, pb = a.path_segments, b.path_segments
    if len(pa) > len(pb):
        pa, pb = pb, pa
    return pb[: len(pa)] == pa


def build_tree(topics: list[Topic], spec: HierarchySpec | None = None) -> SensorTree:
    """Build a sensor tree with one leaf per distinct topic.

    Without a hierarchy spec, slash segmentation defines the levels. With a
    spec, each topic is segmented by the ordered level patterns; topics the
    spec rejects are recorded on ``tree.rejected`` and skipped. Raises
    EmptyTreeError when nothing can be inserted.
    """
    tree = SensorTree()
    inserted = 0
    seen: set[str] = set()
    for topic in topics:
        if topic.path in seen:
            continue
        seen.add(topic.path)
        if spec is None:
            labels = list(topic.segments)
        else:
            try:
                labels = spec.split(topic.path)
            except ValueError as exc:
                tree.rejected.append((topic.path, str(exc)))
                continue
        tree._insert(labels)
        inserted += 1
    if not inserted:
        raise EmptyTreeError("no topics to build a tree from"
                             + (f" ({len(tree.rejected)} rejected)" if tree.rejected else ""))
    tree._freeze()
    return tree


def parse_topic_dump(text: str) -> list[Topic]:
    """Parse the topic-dump format: one topic per line, '#' comments."""
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        out.append(Topic.parse(line))
    return out
