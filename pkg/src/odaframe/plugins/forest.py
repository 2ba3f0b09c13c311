"""Random forest regression built from scratch on numpy.

Trees are grown greedily on variance reduction with a random feature
subset per split and bootstrap-resampled training rows; the forest
prediction is the arithmetic mean of the leaf means, so it always lies
inside the training-response range. Deterministic for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NotTrainedError(RuntimeError):
    pass


@dataclass
class _Node:
    feature: int = -1          # -1 marks a leaf
    threshold: float = 0.0
    value: float = 0.0         # leaf mean
    left: "_Node | None" = None
    right: "_Node | None" = None


@dataclass
class ForestParams:
    n_trees: int = 32
    max_depth: int = 12
    min_samples_leaf: int = 1
    max_features: int | None = None   # None -> ceil(sqrt(d))
    bootstrap_ratio: float = 1.0


def _best_split(X, y, features, min_leaf):
    """Best (feature, threshold, sse) over the candidate features.

    Uses prefix sums over the sorted feature column; split cost is the
    summed squared error of the two children.
    """
    n = len(y)
    best = None
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        total_sum = csum[-1]
        total_sq = csq[-1]
        # candidate split after position i (left = [0..i]); skip equal-value runs
        idx = np.arange(min_leaf - 1, n - min_leaf)
        if idx.size == 0:
            continue
        valid = xs[idx] < xs[idx + 1]
        idx = idx[valid]
        if idx.size == 0:
            continue
        nl = idx + 1.0
        nr = n - nl
        sse_l = csq[idx] - csum[idx] ** 2 / nl
        sse_r = (total_sq - csq[idx]) - (total_sum - csum[idx]) ** 2 / nr
        sse = sse_l + sse_r
        k = int(np.argmin(sse))
        if best is None or sse[k] < best[2]:
            thr = 0.5 * (xs[idx[k]] + xs[idx[k] + 1])
            best = (f, float(thr), float(sse[k]))
    return best


def _grow(X, y, depth, params, rng):
    node = _Node(value=float(y.mean()))
    n, d = X.shape
    if depth >= params.max_depth or n < 2 * params.min_samples_leaf or np.ptp(y) == 0.0:
        return node
    k = params.max_features or math.ceil(math.sqrt(d))
    features = rng.choice(d, size=min(k, d), replace=False)
    best = _best_split(X, y, features, params.min_samples_leaf)
    if best is None:
        return node
    f, thr, _ = best
    mask = X[:, f] <= thr
    node.feature = f
    node.threshold = thr
    node.left = _grow(X[mask], y[mask], depth + 1, params, rng)
    node.right = _grow(X[~mask], y[~mask], depth + 1, params, rng)
    return node


def _apply(node: _Node, x) -> float:
    while node.feature >= 0:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.value


class RandomForest:
    def __init__(self, params: ForestParams | None = None, seed: int = 0):
        self.params = params or ForestParams()
        self.seed = seed
        self.trees: list[_Node] = []
        self.trained = False

    def fit(self, X, y) -> "RandomForest":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or len(X) != len(y):
            raise ValueError("X must be (n, d) with matching y")
        if len(y) < max(2, 2 * self.params.min_samples_leaf):
            raise ValueError(f"too few training pairs: {len(y)}")
        rng = np.random.default_rng(self.seed)
        n = len(y)
        n_boot = max(1, int(round(self.params.bootstrap_ratio * n)))
        self.trees = []
        for _ in range(self.params.n_trees):
            rows = rng.integers(0, n, size=n_boot)
            self.trees.append(_grow(X[rows], y[rows], 0, self.params, rng))
        self.trained = True
        return self

    def predict(self, x) -> float:
        if not self.trained:
            raise NotTrainedError("model has not been trained yet")
        x = np.asarray(x, dtype=np.float64)
        return float(sum(_apply(t, x) for t in self.trees) / len(self.trees))

    def predict_many(self, X) -> np.ndarray:
        return np.array([self.predict(row) for row in np.asarray(X, dtype=np.float64)])
