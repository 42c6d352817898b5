"""Regression trees grown by greedy variance reduction.

Two shapes are provided:

* :class:`DecisionTree` - ordinary CART; every node picks its own split.
* :class:`ObliviousTree` - one (feature, threshold) test per level shared by
  all nodes of that level, so a depth-d tree has 2**d leaves whose index is the
  bit pattern of the d test outcomes.

Split candidates are midpoints between consecutive distinct feature values
(all of them for CART; at most ``max_bins`` per feature for oblivious trees).
Equal-gain candidates resolve to the lowest feature index, then the lowest
threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError


def check_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"feature matrix must be 2-D, got shape {X.shape}")
    if len(X) == 0 or len(X) != len(y):
        raise DataError(f"need matching non-empty X and y, got {len(X)} and {len(y)}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("non-finite values in training data")
    return X, y


def _best_split(Xn, centered, min_leaf):
    """Best (score, column, position) over all columns of a node's rows.

    Columns are sorted independently; score = SL^2 (1/nL + 1/nR) for the
    left prefix sum SL of centred targets. The first maximum in column-major
    order wins, i.e. the lowest column, then the lowest threshold.
    """
    n, k = Xn.shape
    if n < 2 * min_leaf:
        return -np.inf, -1, -1
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    cs = np.cumsum(centered[order], axis=0)[:-1]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    score = cs * cs * (1.0 / n_left + 1.0 / (n - n_left))
    valid = xs[:-1] < xs[1:]
    if min_leaf > 1:
        valid[: min_leaf - 1] = False
        valid[n - min_leaf :] = False
    score = np.where(valid, score, -np.inf).T
    flat = int(np.argmax(score))
    col, pos = divmod(flat, n - 1)
    if not np.isfinite(score[col, pos]):
        return -np.inf, -1, -1
    return float(score[col, pos]), col, (xs[pos, col], xs[pos + 1, col])


def _midpoint(a: float, b: float) -> float:
    t = a + (b - a) / 2.0
    return a if t >= b else t


@dataclass
class DecisionTree:
    """Array-encoded binary tree; ``feature[k] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: int | None = None
    min_samples_leaf: int = 1

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for k in range(len(self.feature)):
            if self.feature[k] >= 0:
                depth[self.left[k]] = depth[self.right[k]] = depth[k] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        """Leaf node id reached by each row."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            go_left = X[rows[active], f[active]] <= self.threshold[node[active]]
            node[active] = np.where(go_left, self.left[node[active]], self.right[node[active]])

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if len(X) == 0:
            return np.empty(0)
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=np.float64),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=np.float64),
            d.get("max_depth"),
            d.get("min_samples_leaf", 1),
        )


def fit_tree(
    X,
    y,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> DecisionTree:
    """Grow a CART regression tree.

    A node becomes a leaf when it reaches ``max_depth``, when its targets are
    constant, or when no split leaves ``min_samples_leaf`` rows on both sides.
    ``max_features`` features are drawn (without replacement, from ``rng``) at
    every split; ``None`` means all of them.
    """
    X, y = check_xy(X, y)
    if max_depth is not None and max_depth < 0:
        raise ConfigError("max_depth must be >= 0")
    if min_samples_leaf < 1:
        raise ConfigError("min_samples_leaf must be >= 1")
    n, d = X.shape
    if max_features is not None and not 1 <= max_features <= d:
        raise ConfigError(f"max_features must lie in [1, {d}]")
    if max_features is not None and max_features < d and rng is None:
        raise ConfigError("feature subsampling needs an rng")

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx) -> int:
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if max_depth is not None and depth >= max_depth:
            continue
        yi = y[idx]
        if yi.max() == yi.min():
            continue
        centered = yi - yi.mean()
        if max_features is None or max_features == d:
            candidates = np.arange(d)
        else:
            candidates = np.sort(rng.choice(d, size=max_features, replace=False))
        _, col, pair = _best_split(X[np.ix_(idx, candidates)], centered, min_samples_leaf)
        if col < 0:
            continue
        f, thr = int(candidates[col]), _midpoint(*pair)
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # push right first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return DecisionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
        max_depth,
        min_samples_leaf,
    )


@dataclass
class ObliviousTree:
    """Symmetric tree: level l tests ``x[features[l]] > thresholds[l]``.

    The leaf index is ``sum(bit_l << l)``; ``leaf_values`` has ``2**depth``
    entries. Leaves that received no training rows inherit their parent's mean.
    """

    features: np.ndarray
    thresholds: np.ndarray
    leaf_values: np.ndarray

    @property
    def depth(self) -> int:
        return len(self.features)

    def leaf_index(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        idx = np.zeros(len(X), dtype=np.int64)
        for level, (f, t) in enumerate(zip(self.features, self.thresholds)):
            idx |= (X[:, f] > t).astype(np.int64) << level
        return idx

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if len(X) == 0:
            return np.empty(0)
        return self.leaf_values[self.leaf_index(X)]

    def predict_recursive(self, x) -> float:
        """Walk the equivalent binary tree node by node (reference path)."""

        def walk(level: int, prefix: int) -> float:
            if level == self.depth:
                return float(self.leaf_values[prefix])
            bit = int(x[self.features[level]] > self.thresholds[level])
            return walk(level + 1, prefix | (bit << level))

        return walk(0, 0)

    def to_dict(self) -> dict:
        return {
            "features": self.features.tolist(),
            "thresholds": self.thresholds.tolist(),
            "leaf_values": self.leaf_values.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObliviousTree":
        return cls(
            np.array(d["features"], dtype=np.int64),
            np.array(d["thresholds"], dtype=np.float64),
            np.array(d["leaf_values"], dtype=np.float64),
        )


@dataclass
class Quantized:
    """Per-feature split borders and the bin index of every row.

    ``bins[i, f] <= b`` exactly when ``X[i, f] <= borders[f][b]``.
    """

    bins: np.ndarray
    borders: list[np.ndarray]


def quantize(X, max_bins: int = 254) -> Quantized:
    """Borders are midpoints between consecutive distinct values.

    Features with more than ``max_bins + 1`` distinct values keep ``max_bins``
    midpoints at evenly spaced ranks of the distinct values.
    """
    X = np.asarray(X, dtype=np.float64)
    if max_bins < 1:
        raise ConfigError("max_bins must be >= 1")
    bins = np.empty(X.shape, dtype=np.int64)
    borders = []
    for f in range(X.shape[1]):
        u = np.unique(X[:, f])
        if len(u) - 1 > max_bins:
            ranks = np.unique(np.round(np.linspace(0, len(u) - 2, max_bins)).astype(np.int64))
        else:
            ranks = np.arange(len(u) - 1)
        b = np.array([_midpoint(u[k], u[k + 1]) for k in ranks], dtype=np.float64)
        borders.append(b)
        bins[:, f] = np.searchsorted(b, X[:, f], side="left")
    return Quantized(bins, borders)


def fit_oblivious_tree(X, y, depth: int, max_bins: int = 254, quantized: Quantized | None = None) -> ObliviousTree:
    """Grow a depth-``depth`` oblivious tree, level by level.

    Each level scans every (feature, border) candidate and keeps the one
    maximising the summed variance reduction over all current leaves. If no
    candidate separates any leaf the level reuses a never-true test
    (threshold +inf) so the leaf count stays 2**depth. Pass ``quantized`` to
    reuse borders across boosting iterations.
    """
    X, y = check_xy(X, y)
    if depth < 0:
        raise ConfigError("depth must be >= 0")
    n, d = X.shape
    q = quantized if quantized is not None else quantize(X, max_bins)
    leaf = np.zeros(n, dtype=np.int64)
    feats, thrs = [], []
    parent_values = np.array([y.mean()])
    for level in range(depth):
        n_leaves = 1 << level
        counts = np.bincount(leaf, minlength=n_leaves).astype(np.float64)
        sums = np.bincount(leaf, weights=y, minlength=n_leaves)
        means = np.divide(sums, counts, out=parent_values.copy(), where=counts > 0)
        centered = y - means[leaf]
        best = (0.0, 0, np.inf)
        for f in range(d):
            borders = q.borders[f]
            nb = len(borders)
            if nb == 0:
                continue
            cell = q.bins[:, f] * n_leaves + leaf
            size = (nb + 1) * n_leaves
            s_left = np.bincount(cell, weights=centered, minlength=size).reshape(nb + 1, n_leaves)
            n_left = np.bincount(cell, minlength=size).reshape(nb + 1, n_leaves).astype(np.float64)
            s_left = np.cumsum(s_left, axis=0)[:-1]
            n_left = np.cumsum(n_left, axis=0)[:-1]
            n_right = counts[None, :] - n_left
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = np.where(
                    (n_left > 0) & (n_right > 0),
                    s_left * s_left * (1.0 / n_left + 1.0 / n_right),
                    0.0,
                ).sum(axis=1)
            pos = int(np.argmax(gain))
            if gain[pos] > best[0]:
                best = (float(gain[pos]), f, float(borders[pos]))
        _, f, thr = best
        feats.append(f)
        thrs.append(thr)
        leaf = leaf | ((X[:, f] > thr).astype(np.int64) << level)
        # children of leaf k are k (bit 0) and k | 1 << level (bit 1)
        parent_values = np.concatenate([means, means])

    n_leaves = 1 << depth
    counts = np.bincount(leaf, minlength=n_leaves).astype(np.float64)
    sums = np.bincount(leaf, weights=y, minlength=n_leaves)
    values = np.divide(sums, counts, out=parent_values.copy(), where=counts > 0)
    return ObliviousTree(np.array(feats, dtype=np.int64), np.array(thrs, dtype=np.float64), values)
