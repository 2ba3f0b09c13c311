import random

import pytest

from odaframe.sensors import Topic
from odaframe.tree import build_tree


def fig2_topics():
    """Rack/chassis/server/cpu tree used across block-resolution tests.

    One rack r03 with chassis c01 and c02; servers s01..s04 live under c02,
    each with two CPUs carrying cpu-cycles and cache-misses counters; both
    chassis expose a power sensor.
    """
    topics = ["/r03/c01/power", "/r03/c02/power"]
    for s in ("s01", "s02", "s03", "s04"):
        for cpu in ("cpu0", "cpu1"):
            for sensor in ("cpu-cycles", "cache-misses"):
                topics.append(f"/r03/c02/{s}/{cpu}/{sensor}")
    return [Topic.parse(t) for t in topics]


@pytest.fixture
def fig2_tree():
    return build_tree(fig2_topics())


def random_topics(rng: random.Random, max_leaves=200):
    """Random 1-3 level topic population for oracle comparisons."""
    depth = rng.randint(1, 3)
    names = ["power", "temp", "cpu-cycles", "cache-misses", "healthy", "util"]
    fanouts = [rng.randint(1, 4) for _ in range(depth)]
    topics = set()
    n_leaves = rng.randint(1, max_leaves)
    for _ in range(n_leaves):
        parts = []
        d = rng.randint(1, depth)
        for lvl in range(d):
            parts.append(f"{'rcsn'[lvl % 4]}{rng.randrange(fanouts[lvl]):02d}")
        topics.add("/" + "/".join(parts) + "/" + rng.choice(names))
    return sorted((Topic.parse(t) for t in topics), key=lambda t: t.path)
