"""Per-daemon registry of sensor caches and the current sensor tree.

Registration is the announcement path: every topic that gets a cache also
becomes a leaf in the navigator tree. The tree is rebuilt atomically on
changes; in-flight readers keep whatever snapshot they already hold.
"""

from __future__ import annotations

import threading

from .sensors import NS_PER_S, SensorCache, Topic
from .tree import HierarchySpec, SensorTree, build_tree


class _EmptyTree(SensorTree):
    def __init__(self) -> None:
        super().__init__()
        self._freeze()


class SensorRegistry:
    def __init__(self, capacity_ns: int = 180 * NS_PER_S,
                 nominal_interval_ns: int = NS_PER_S,
                 hierarchy: HierarchySpec | None = None):
        self.default_capacity_ns = capacity_ns
        self.default_interval_ns = nominal_interval_ns
        self.hierarchy = hierarchy
        self._caches: dict[str, SensorCache] = {}
        self._tree: SensorTree = _EmptyTree()
        self._lock = threading.Lock()
        self._dirty = False

    def register(self, topic: str, *, scale: int = 1,
                 capacity_ns: int | None = None,
                 interval_ns: int | None = None) -> SensorCache:
        """Create (or return) the cache for ``topic`` and mark the tree stale."""
        Topic.parse(topic)
        with self._lock:
            cache = self._caches.get(topic)
            if cache is None:
                cache = SensorCache(
                    capacity_ns or self.default_capacity_ns,
                    interval_ns or self.default_interval_ns,
                    scale=scale,
                )
                self._caches[topic] = cache
                self._dirty = True
            return cache

    def register_all(self, topics: list[str], **kw) -> None:
        for t in topics:
            self.register(t, **kw)

    def cache_for(self, topic: str) -> SensorCache | None:
        return self._caches.get(topic)

    def topics(self) -> list[str]:
        with self._lock:
            return sorted(self._caches)

    def tree(self) -> SensorTree:
        """Current snapshot; rebuilds first if registrations are pending."""
        with self._lock:
            if self._dirty:
                topics = [Topic(t) for t in sorted(self._caches)]
                if topics:
                    self._tree = build_tree(topics, self.hierarchy)
                else:
                    self._tree = _EmptyTree()
                self._dirty = False
            return self._tree
