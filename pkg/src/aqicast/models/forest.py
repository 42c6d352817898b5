"""Bagged regression forest."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .tree import DecisionTree, check_xy, fit_tree

MAX_FEATURES_TOKENS = ("auto", "sqrt", "log2")


def resolve_max_features(rule, n_features: int) -> int:
    """auto -> d, sqrt -> ceil(sqrt d), log2 -> ceil(log2 d); ints pass through."""
    if rule is None or rule == "auto":
        return n_features
    if rule == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    if rule == "log2":
        return max(1, math.ceil(math.log2(n_features))) if n_features > 1 else 1
    if isinstance(rule, int) and not isinstance(rule, bool) and 1 <= rule <= n_features:
        return rule
    raise ConfigError(f"invalid max_features {rule!r}; expected one of {MAX_FEATURES_TOKENS} or 1..{n_features}")


def tree_rng(seed: int, index: int) -> np.random.Generator:
    """Independent random stream for tree ``index``."""
    return np.random.default_rng([seed, index])


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    n_estimators: int
    max_depth: int | None
    max_features: str | int
    min_samples_leaf: int
    bootstrap: bool
    seed: int
    n_samples: int
    feature_names: list[str] = field(default_factory=list)

    kind = "forest"

    def bootstrap_indices(self, index: int) -> np.ndarray:
        """Rows drawn for tree ``index`` (regenerated from the seed)."""
        if not self.bootstrap:
            return np.arange(self.n_samples)
        return tree_rng(self.seed, index).integers(0, self.n_samples, self.n_samples)

    def predict_per_tree(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.stack([t.predict(X) for t in self.trees]) if len(X) else np.empty((len(self.trees), 0))

    def predict(self, X) -> np.ndarray:
        return self.predict_per_tree(X).mean(axis=0)

    def params(self) -> dict:
        return {
            "n_estimators": self.n_estimators,
            "max_depth": self.max_depth,
            "max_features": self.max_features,
            "min_samples_leaf": self.min_samples_leaf,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }

    def to_dict(self) -> dict:
        return {"params": self.params(), "n_samples": self.n_samples, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict, feature_names=()) -> "ForestModel":
        return cls(
            [DecisionTree.from_dict(t) for t in d["trees"]],
            n_samples=d["n_samples"],
            feature_names=list(feature_names),
            **d["params"],
        )


def fit_forest(
    X,
    y,
    n_estimators: int = 100,
    max_depth: int | None = None,
    max_features="auto",
    min_samples_leaf: int = 1,
    bootstrap: bool = True,
    seed: int = 42,
    threads: int = 1,
    feature_names=(),
) -> ForestModel:
    """Fit ``n_estimators`` trees on bootstrap resamples of (X, y).

    Tree ``k`` draws its bootstrap rows and per-split feature subsets from
    ``default_rng([seed, k])``, so the forest is identical for any thread count.
    """
    X, y = check_xy(X, y)
    if n_estimators < 1:
        raise ConfigError("n_estimators must be >= 1")
    n, d = X.shape
    k_features = resolve_max_features(max_features, d)

    def grow(k: int) -> DecisionTree:
        rng = tree_rng(seed, k)
        idx = rng.integers(0, n, n) if bootstrap else np.arange(n)
        return fit_tree(X[idx], y[idx], max_depth, min_samples_leaf, k_features, rng)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(grow, range(n_estimators)))
    else:
        trees = [grow(k) for k in range(n_estimators)]
    return ForestModel(
        trees, n_estimators, max_depth, max_features, min_samples_leaf, bootstrap, seed, n, list(feature_names)
    )
