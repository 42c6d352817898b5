"""First-order gradient boosting on squared error.

Each iteration fits a depth-limited tree to the current residuals and adds it
scaled by the learning rate. ``shape="levelwise"`` grows ordinary CART trees
level by level; ``shape="oblivious"`` grows symmetric trees with one shared
test per level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .tree import DecisionTree, ObliviousTree, check_xy, fit_oblivious_tree, fit_tree, quantize

SHAPES = ("levelwise", "oblivious")


@dataclass
class BoosterModel:
    base_score: float
    learning_rate: float
    iterations: int
    depth: int
    shape: str
    trees: list
    seed: int = 42
    subsample: float = 1.0
    min_samples_leaf: int = 1
    tol: float = 0.0
    max_bins: int = 254
    train_rmse: list[float] = field(default_factory=list)
    feature_names: list[str] = field(default_factory=list)

    kind = "booster"
    loss = "RMSE"

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, X, n_trees: int | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.full(len(X), self.base_score)
        for tree in self.trees[:n_trees]:
            out += self.learning_rate * tree.predict(X)
        return out

    def params(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "iterations": self.iterations,
            "depth": self.depth,
            "shape": self.shape,
            "seed": self.seed,
            "subsample": self.subsample,
            "min_samples_leaf": self.min_samples_leaf,
            "tol": self.tol,
            "max_bins": self.max_bins,
        }

    def to_dict(self) -> dict:
        return {
            "params": self.params(),
            "base_score": self.base_score,
            "loss": self.loss,
            "train_rmse": self.train_rmse,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict, feature_names=()) -> "BoosterModel":
        tree_cls = ObliviousTree if d["params"]["shape"] == "oblivious" else DecisionTree
        return cls(
            base_score=d["base_score"],
            trees=[tree_cls.from_dict(t) for t in d["trees"]],
            train_rmse=list(d.get("train_rmse", [])),
            feature_names=list(feature_names),
            **d["params"],
        )


def fit_booster(
    X,
    y,
    iterations: int = 100,
    learning_rate: float = 0.1,
    depth: int = 6,
    shape: str = "levelwise",
    seed: int = 42,
    subsample: float = 1.0,
    min_samples_leaf: int = 1,
    tol: float = 0.0,
    max_bins: int = 254,
    feature_names=(),
) -> BoosterModel:
    """Boost ``iterations`` trees from the base score mean(y).

    Training stops early once an iteration lowers the training MSE by less
    than ``tol``. With ``subsample < 1`` each tree sees a random fraction of
    rows drawn without replacement from ``default_rng([seed, t])``.
    """
    X, y = check_xy(X, y)
    if learning_rate < 0:
        raise ConfigError("learning_rate must be >= 0")
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")
    if shape not in SHAPES:
        raise ConfigError(f"unknown tree shape {shape!r}; expected one of {SHAPES}")
    if not 0 < subsample <= 1:
        raise ConfigError("subsample must lie in (0, 1]")
    n = len(y)
    base = float(y.mean())
    pred = np.full(n, base)
    mse = float(np.mean((y - pred) ** 2))
    history = [float(np.sqrt(mse))]
    trees = []
    full_grid = quantize(X, max_bins) if shape == "oblivious" and subsample == 1 else None
    for t in range(iterations):
        resid = y - pred
        if subsample < 1:
            rng = np.random.default_rng([seed, t])
            rows = np.sort(rng.choice(n, size=max(1, int(round(subsample * n))), replace=False))
        else:
            rows = slice(None)
        if shape == "oblivious":
            tree = fit_oblivious_tree(X[rows], resid[rows], depth, max_bins, full_grid)
        else:
            tree = fit_tree(X[rows], resid[rows], max_depth=depth, min_samples_leaf=min_samples_leaf)
        step = learning_rate * tree.predict(X)
        new_pred = pred + step
        new_mse = float(np.mean((y - new_pred) ** 2))
        trees.append(tree)
        pred = new_pred
        history.append(float(np.sqrt(new_mse)))
        if mse - new_mse < tol:
            break
        mse = new_mse
    return BoosterModel(
        base, learning_rate, iterations, depth, shape, trees, seed, subsample,
        min_samples_leaf, tol, max_bins, history, list(feature_names),
    )
