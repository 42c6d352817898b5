"""From-scratch regression learners and their JSON model documents."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ConfigError, DataError, SchemaError
from ..table import TARGET, DataTable, design_matrix
from .boost import BoosterModel, fit_booster
from .forest import ForestModel, fit_forest, resolve_max_features
from .svr import SvrModel, fit_svr, kkt_violations
from .tree import DecisionTree, ObliviousTree, fit_oblivious_tree, fit_tree

FORMAT = "aqicast-model"
FORMAT_VERSION = 1

FAMILIES = ("forest", "boost-oblivious", "boost-level", "svr", "tree")

__all__ = [
    "BoosterModel", "DecisionTree", "ForestModel", "ObliviousTree", "SvrModel",
    "fit_booster", "fit_forest", "fit_oblivious_tree", "fit_svr", "fit_tree",
    "fit_family", "kkt_violations", "load_model", "predict", "predict_table",
    "resolve_max_features", "save_model", "schema_fingerprint",
]


def schema_fingerprint(feature_names: Sequence[str]) -> str:
    return hashlib.sha256("\x1f".join(feature_names).encode()).hexdigest()[:16]


def fit_family(family: str, X, y, params: dict | None = None, feature_names=(), threads: int = 1):
    """Fit one of the named model families with a parameter dict."""
    params = dict(params or {})
    for alias in ("random_state", "random_seed"):
        if alias in params:
            params.setdefault("seed", params.pop(alias))
    loss = params.pop("loss_function", "RMSE")
    if loss != "RMSE":
        raise ConfigError(f"only the RMSE loss is supported, got {loss!r}")
    try:
        if family == "forest":
            return fit_forest(X, y, threads=threads, feature_names=feature_names, **params)
        if family == "boost-oblivious":
            return fit_booster(X, y, shape="oblivious", feature_names=feature_names, **params)
        if family == "boost-level":
            return fit_booster(X, y, shape="levelwise", feature_names=feature_names, **params)
        if family == "svr":
            params.pop("kernel", None)
            return fit_svr(X, y, feature_names=feature_names, **params)
        if family == "tree":
            seed = params.pop("seed", 42)
            rule = params.pop("max_features", None)
            if rule is not None:
                params["max_features"] = resolve_max_features(rule, np.shape(X)[1])
                params["rng"] = np.random.default_rng(seed)
            model = fit_tree(X, y, **params)
            model.feature_names = list(feature_names)
            return model
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {family}: {exc}") from exc
    raise ConfigError(f"unknown model family {family!r}; expected one of {FAMILIES}")


def _kind(model) -> str:
    if isinstance(model, ForestModel):
        return "forest"
    if isinstance(model, BoosterModel):
        return "booster"
    if isinstance(model, SvrModel):
        return "svr"
    if isinstance(model, DecisionTree):
        return "tree"
    raise ConfigError(f"not a model: {type(model).__name__}")


def to_document(model) -> dict:
    names = list(getattr(model, "feature_names", []) or [])
    return {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "kind": _kind(model),
        "features": names,
        "schema_fingerprint": schema_fingerprint(names),
        "model": model.to_dict(),
    }


def from_document(doc: dict):
    if doc.get("format") != FORMAT:
        raise ConfigError("not an aqicast model document")
    if doc.get("version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported model document version {doc.get('version')}")
    names = doc.get("features", [])
    if schema_fingerprint(names) != doc.get("schema_fingerprint"):
        raise ConfigError("model document fingerprint does not match its feature list")
    kind = doc["kind"]
    body = doc["model"]
    if kind == "forest":
        return ForestModel.from_dict(body, names)
    if kind == "booster":
        return BoosterModel.from_dict(body, names)
    if kind == "svr":
        return SvrModel.from_dict(body, names)
    if kind == "tree":
        tree = DecisionTree.from_dict(body)
        tree.feature_names = list(names)
        return tree
    raise ConfigError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(to_document(model), sort_keys=True) + "\n")


def load_model(path):
    try:
        return from_document(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def predict(model, X) -> np.ndarray:
    """Predictions for a feature matrix whose columns follow the training order."""
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        return np.empty(0)
    names = getattr(model, "feature_names", None) or []
    if X.ndim != 2:
        raise DataError("feature matrix must be 2-D")
    if names and X.shape[1] != len(names):
        raise SchemaError(f"model expects {len(names)} features, got {X.shape[1]}")
    return model.predict(X)


def predict_table(model, table: DataTable) -> np.ndarray:
    names = list(getattr(model, "feature_names", []) or [])
    available = set(table.numeric_columns)
    missing = [c for c in names if c not in available]
    extra = [c for c in table.numeric_columns if c not in names and c != TARGET]
    if missing or extra:
        raise SchemaError(f"feature mismatch: missing {missing}, extra {extra}")
    X = table.frame[names].to_numpy(dtype=np.float64)
    if np.isnan(X).any():
        raise DataError("features contain missing values; run the preprocessing pipeline first")
    return predict(model, X)


def table_xy(table: DataTable):
    return design_matrix(table, TARGET)
