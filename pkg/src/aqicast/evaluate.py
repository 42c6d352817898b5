"""Regression metrics, chronological grid search, residuals and the performance matrix."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, InsufficientDataError
from .table import TARGET, DataTable

log = logging.getLogger(__name__)

MATRIX_COLUMNS = ("MSE", "RMSE", "MAE", "R2")


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    rmse: float
    mae: float
    r2: float | None
    mape: float | None
    n: int
    mape_excluded: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def _check_pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if len(y) != len(yhat):
        raise DataError(f"length mismatch: {len(y)} actuals vs {len(yhat)} predictions")
    if len(y) == 0:
        raise DataError("cannot score an empty prediction set")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yhat))):
        raise DataError("actuals and predictions must be finite")
    return y, yhat


def metrics(y, yhat) -> MetricsReport:
    """MSE, RMSE, MAE, R2 and MAPE (percent, over nonzero actuals only).

    R2 is None when y is constant; MAPE is None when every actual is zero.
    """
    y, yhat = _check_pair(y, yhat)
    r = y - yhat
    mse = float(np.mean(r * r))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = None if ss_tot == 0 else 1.0 - float(np.sum(r * r)) / ss_tot
    nz = y != 0
    mape = float(100.0 * np.mean(np.abs(r[nz] / y[nz]))) if nz.any() else None
    return MetricsReport(mse, math.sqrt(mse), float(np.mean(np.abs(r))), r2, mape, len(y), int((~nz).sum()))


# -- folds and grids --------------------------------------------------------------


def expanding_folds(dates: Sequence, k: int = 3) -> list[tuple[np.ndarray, np.ndarray]]:
    """Chronological expanding-window folds over the distinct dates.

    The distinct dates are cut into k + 1 contiguous blocks; fold i trains on
    blocks 0..i and validates on block i + 1. Rows sharing a date always land
    on the same side.
    """
    if k < 1:
        raise ConfigError("folds must be >= 1")
    dates = np.asarray(dates)
    uniq = np.unique(dates)
    if len(uniq) < k + 1:
        raise InsufficientDataError(f"{len(uniq)} distinct dates cannot form {k} expanding folds")
    blocks = np.array_split(uniq, k + 1)
    out = []
    for i in range(k):
        cutoff = blocks[i][-1]
        val_dates = blocks[i + 1]
        train = np.flatnonzero(dates <= cutoff)
        val = np.flatnonzero((dates >= val_dates[0]) & (dates <= val_dates[-1]))
        out.append((train, val))
    return out


def expand_grid(grid: dict[str, Sequence]) -> list[dict]:
    """Cartesian product with axes and values in declared order."""
    if not grid:
        return [{}]
    for axis, values in grid.items():
        if not isinstance(values, (list, tuple)) or len(values) == 0:
            raise ConfigError(f"grid axis {axis!r} must be a non-empty list")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


@dataclass
class GridSearchResult:
    family: str
    grid: dict
    combinations: list[dict]
    scores: list[float]
    fold_scores: list[list[float]]
    best_index: int
    errors: dict = field(default_factory=dict)

    @property
    def best_params(self) -> dict:
        return self.combinations[self.best_index]

    @property
    def best_score(self) -> float:
        return self.scores[self.best_index]

    @property
    def tie_break(self) -> str:
        ties = [i for i, s in enumerate(self.scores) if s == self.best_score]
        if len(ties) > 1:
            return f"{len(ties)} combinations tied; kept the first in enumeration order (#{ties[0]})"
        return "unique minimum"

    def to_dict(self) -> dict:
        def clean(v):
            return None if not math.isfinite(v) else v

        return {
            "family": self.family,
            "grid": self.grid,
            "metric": "mean validation RMSE",
            "n_combinations": len(self.combinations),
            "results": [
                {"params": c, "mean_rmse": clean(s), "fold_rmse": [clean(f) for f in fs],
                 **({"error": self.errors[i]} if i in self.errors else {})}
                for i, (c, s, fs) in enumerate(zip(self.combinations, self.scores, self.fold_scores))
            ],
            "best_index": self.best_index,
            "best_params": self.best_params,
            "best_score": clean(self.best_score),
            "tie_break": self.tie_break,
        }


def grid_search(
    family: str,
    grid: dict[str, Sequence],
    train: DataTable,
    folds: int = 3,
    target: str = TARGET,
    threads: int = 1,
) -> GridSearchResult:
    """Score every grid combination by mean validation RMSE over expanding folds.

    A combination that raises records +inf instead of aborting the search.
    Ties keep the earliest combination.
    """
    from .models import fit_family, predict

    combos = expand_grid(grid)
    frame = train.frame
    keep = frame[target].notna().to_numpy()
    features = [c for c in train.numeric_columns if c != target]
    X = frame.loc[keep, features].to_numpy(dtype=np.float64)
    y = frame.loc[keep, target].to_numpy(dtype=np.float64)
    dates = frame.loc[keep, "Date"].to_numpy(dtype="datetime64[D]")
    splits = expanding_folds(dates, folds)

    def evaluate(i: int):
        per_fold = []
        try:
            for tr, va in splits:
                model = fit_family(family, X[tr], y[tr], combos[i], features)
                per_fold.append(metrics(y[va], predict(model, X[va])).rmse)
            return i, float(np.mean(per_fold)), per_fold, None
        except Exception as exc:  # noqa: BLE001 - a failing combination must not stop the search
            log.warning("grid combination %s failed: %s", combos[i], exc)
            return i, math.inf, per_fold + [math.inf] * (len(splits) - len(per_fold)), str(exc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(evaluate, range(len(combos))))
    else:
        results = [evaluate(i) for i in range(len(combos))]
    results.sort(key=lambda r: r[0])
    scores = [r[1] for r in results]
    best = int(np.argmin(scores))  # first minimum in enumeration order
    return GridSearchResult(
        family, {k: list(v) for k, v in grid.items()}, combos, scores,
        [r[2] for r in results], best, {r[0]: r[3] for r in results if r[3]},
    )


# -- residuals ---------------------------------------------------------------


@dataclass
class ResidualReport:
    mean: float
    median: float
    std: float
    quantiles: dict[str, float]
    bin_edges: list[float]
    counts: list[int]

    def to_dict(self) -> dict:
        return asdict(self)


def residual_report(y, yhat, bins: int = 20) -> ResidualReport:
    """Summary of r = y - yhat with an equal-width histogram over [min, max]."""
    y, yhat = _check_pair(y, yhat)
    if bins < 1:
        raise ConfigError("bins must be >= 1")
    r = y - yhat
    lo, hi = float(r.min()), float(r.max())
    if lo == hi:
        edges = np.array([lo - 0.5, hi + 0.5]) if bins == 1 else np.linspace(lo - 0.5, hi + 0.5, bins + 1)
    else:
        edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(r, bins=edges)
    q = np.quantile(r, [0.05, 0.25, 0.5, 0.75, 0.95])
    return ResidualReport(
        float(r.mean()),
        float(np.median(r)),
        float(r.std(ddof=1)) if len(r) > 1 else 0.0,
        dict(zip(("5%", "25%", "50%", "75%", "95%"), map(float, q))),
        edges.tolist(),
        counts.tolist(),
    )


# -- performance matrix ------------------------------------------------------------


@dataclass
class PerformanceMatrix:
    rows: list[tuple[str, MetricsReport]]

    @property
    def ranking(self) -> list[str]:
        return [name for name, _ in self.rows]

    def rank_of(self, name: str) -> int:
        return self.ranking.index(name) + 1

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "model", *MATRIX_COLUMNS])
        for i, (name, m) in enumerate(self.rows, start=1):
            w.writerow([i, name, repr(m.mse), repr(m.rmse), repr(m.mae), "" if m.r2 is None else repr(m.r2)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "PerformanceMatrix":
        return cls.parse_csv(Path(path).read_text())

    @classmethod
    def parse_csv(cls, text: str) -> "PerformanceMatrix":
        entries = []
        for row in csv.DictReader(io.StringIO(text)):
            entries.append((row["model"], MetricsReport(
                float(row["MSE"]), float(row["RMSE"]), float(row["MAE"]),
                None if row["R2"] == "" else float(row["R2"]), None, 0,
            )))
        return cls(entries)

    def to_dict(self) -> dict:
        return {
            "ranking": self.ranking,
            "rows": [{"rank": i, "model": n, **m.to_dict()} for i, (n, m) in enumerate(self.rows, start=1)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def compare_models(entries: Sequence[tuple[str, MetricsReport]]) -> PerformanceMatrix:
    """Rank models by R2 descending; undefined R2 sorts last, ties keep input order."""
    if not entries:
        raise ConfigError("nothing to compare")
    names = [n for n, _ in entries]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ConfigError(f"duplicate model names: {dupes}")
    ordered = sorted(entries, key=lambda e: (e[1].r2 is None, -(e[1].r2 or 0.0)))
    return PerformanceMatrix(list(ordered))
