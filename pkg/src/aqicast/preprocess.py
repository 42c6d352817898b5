"""Cleaning pipeline: imputation, feature selection, outliers, encoding, scaling, split.

Stages must run in this order (a stage may be re-applied, never run after a
later one):

    impute -> fill_zero -> select -> split -> encode -> scale
"""

from __future__ import annotations

import datetime as dt
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, InsufficientDataError, PipelineOrderError, SplitError
from .table import KEY_COLUMNS, TARGET, DataTable

log = logging.getLogger(__name__)

STAGES = ("impute", "fill_zero", "select", "split", "encode", "scale")

POLLUTANT_FEATURES = ("PM2.5", "PM10", "NO", "NO2", "NOx", "NH3", "SO2", "CO")
DEFAULT_DROP = (
    "Temp", "RH", "WS", "WD", "SR",  # meteorology
    "Benzene", "Toluene", "Xylene",  # volatile organics
    "Ozone",
)


def _check_order(table: DataTable, stage: str) -> None:
    rank = STAGES.index(stage)
    done = [s for s in table.stages if s in STAGES]
    later = [s for s in done if STAGES.index(s) > rank]
    if later:
        raise PipelineOrderError(f"cannot run {stage!r} after {later[-1]!r}")


# -- imputation ----------------------------------------------------------


class FillEntry(NamedTuple):
    station: str
    year: int
    month: int
    column: str
    mean_filled: int
    zero_filled: int
    group_mean: float | None


@dataclass
class ImputationLog:
    entries: list[FillEntry] = field(default_factory=list)
    fully_zero_filled: list[tuple[str, int, int, str]] = field(default_factory=list)

    @property
    def mean_fills(self) -> int:
        return sum(e.mean_filled for e in self.entries)

    @property
    def zero_fills(self) -> int:
        return sum(e.zero_filled for e in self.entries)

    def merge(self, other: "ImputationLog") -> "ImputationLog":
        return ImputationLog(
            self.entries + other.entries, self.fully_zero_filled + other.fully_zero_filled
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "mean_fills": self.mean_fills,
                "zero_fills": self.zero_fills,
                "entries": [e._asdict() for e in self.entries],
                "fully_zero_filled": [list(t) for t in self.fully_zero_filled],
            },
            indent=2,
        )


def _group_keys(frame: pd.DataFrame) -> list[pd.Series]:
    return [frame["Station"], frame["Date"].dt.year.rename("year"), frame["Date"].dt.month.rename("month")]


def _imputable(table: DataTable, columns: Sequence[str] | None) -> list[str]:
    if columns is None:
        return [c for c in table.numeric_columns if c != TARGET and c not in table.encoded]
    return [c for c in columns if c in table.numeric_columns]


def impute_group_mean(
    table: DataTable, columns: Sequence[str] | None = None
) -> tuple[DataTable, ImputationLog]:
    """Fill each hole with the mean of its (station, year, month) group.

    Groups with no present value are left missing for the zero-fill pass.
    """
    _check_order(table, "impute")
    frame = table.frame
    cols = _imputable(table, columns)
    grouped = frame[cols].groupby(_group_keys(frame), sort=True)
    means = grouped.transform("mean")
    holes = frame[cols].isna()
    filled = frame[cols].fillna(means)

    entries = []
    fill_counts = (holes & filled.notna()).groupby(_group_keys(frame), sort=True).sum()
    group_means = grouped.mean()
    for (station, year, month), row in fill_counts.iterrows():
        for c in cols:
            k = int(row[c])
            if k:
                entries.append(
                    FillEntry(station, int(year), int(month), c, k, 0, float(group_means.at[(station, year, month), c]))
                )
    frame[cols] = filled
    return table.with_stage("impute", frame), ImputationLog(entries)


def fill_remaining_zero(
    table: DataTable, columns: Sequence[str] = POLLUTANT_FEATURES
) -> tuple[DataTable, ImputationLog]:
    """Set cells still missing after group-mean imputation to 0.

    Only ``columns`` (by default the eight retained pollutants) are filled, so
    columns destined to be dropped never receive fabricated zeros.
    """
    _check_order(table, "fill_zero")
    if "impute" not in table.stages:
        raise PipelineOrderError("fill_zero requires impute_group_mean first")
    frame = table.frame
    cols = [c for c in columns if c in frame.columns]
    holes = frame[cols].isna()
    keys = _group_keys(frame)
    counts = holes.groupby(keys, sort=True).sum()
    sizes = holes.groupby(keys, sort=True).size()
    entries, full = [], []
    for (station, year, month), row in counts.iterrows():
        for c in cols:
            k = int(row[c])
            if k:
                entries.append(FillEntry(station, int(year), int(month), c, 0, k, None))
                if k == int(sizes[(station, year, month)]):
                    full.append((station, int(year), int(month), c))
    if full:
        log.warning("%d station-month-column groups were entirely zero-filled", len(full))
    frame[cols] = frame[cols].fillna(0.0)
    return table.with_stage("fill_zero", frame), ImputationLog(entries, full)


# -- feature selection -----------------------------------------------------


def select_features(table: DataTable, drop: Sequence[str] = DEFAULT_DROP) -> DataTable:
    _check_order(table, "select")
    if TARGET in drop:
        raise ConfigError("refusing to drop the target column")
    if any(k in drop for k in KEY_COLUMNS):
        raise ConfigError("key columns cannot be dropped")
    absent = [c for c in drop if c not in table.numeric_columns]
    if absent:
        log.warning("drop list names absent columns: %s", absent)
    frame = table.frame.drop(columns=[c for c in drop if c in table.numeric_columns])
    return table.with_stage("select", frame)


# -- outliers --------------------------------------------------------------


def quantile_linear(sorted_values: np.ndarray, p: float) -> float:
    """Quantile with h = (n-1)p + 1 on a sorted sample (1-based)."""
    n = len(sorted_values)
    h = (n - 1) * p
    lo = int(np.floor(h))
    hi = min(lo + 1, n - 1)
    return float(sorted_values[lo] + (h - lo) * (sorted_values[hi] - sorted_values[lo]))


@dataclass
class OutlierColumn:
    column: str
    q1: float
    q3: float
    iqr: float
    lower: float
    upper: float
    flagged_rows: list[int]
    flagged_values: list[float]


@dataclass
class OutlierReport:
    k: float
    columns: dict[str, OutlierColumn]

    def to_json(self) -> str:
        return json.dumps(
            {"k": self.k, "columns": {c: asdict(v) for c, v in self.columns.items()}}, indent=2
        )


def outlier_report(
    table: DataTable, k: float = 1.5, columns: Sequence[str] | None = None
) -> OutlierReport:
    """Flag values beyond the IQR fences. The table itself is never modified."""
    cols = list(columns) if columns is not None else [
        c for c in table.numeric_columns if c not in table.encoded
    ]
    out = {}
    for c in cols:
        values = table.column(c)
        present = ~np.isnan(values)
        if present.sum() < 4:
            raise InsufficientDataError(f"column {c!r} has fewer than 4 values")
        s = np.sort(values[present])
        q1, q3 = quantile_linear(s, 0.25), quantile_linear(s, 0.75)
        iqr = q3 - q1
        lower, upper = q1 - k * iqr, q3 + k * iqr
        idx = np.flatnonzero(present & ((values < lower) | (values > upper)))
        out[c] = OutlierColumn(c, q1, q3, iqr, lower, upper, idx.tolist(), values[idx].tolist())
    return OutlierReport(k, out)


# -- split -------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    """train = [train_start, boundary), test = [boundary, test_end]."""

    train_start: dt.date
    boundary: dt.date
    test_end: dt.date

    def __post_init__(self):
        if not (self.train_start < self.boundary <= self.test_end):
            raise ConfigError(
                f"split dates must satisfy train_start < boundary <= test_end, got {self}"
            )

    @classmethod
    def around(cls, table: DataTable, boundary: dt.date) -> "SplitSpec":
        """Spec spanning the whole table with the given boundary."""
        dates = table.column("Date")
        first = pd.Timestamp(dates.min()).date()
        last = pd.Timestamp(dates.max()).date()
        if boundary <= first:
            raise SplitError("empty train split: boundary precedes all data")
        if boundary > last:
            raise SplitError("empty test split: boundary follows all data")
        return cls(first, boundary, last)


def time_split(table: DataTable, spec: SplitSpec) -> tuple[DataTable, DataTable]:
    _check_order(table, "split")
    if table.role is not None:
        raise PipelineOrderError("table has already been split")
    frame = table.frame
    dates = frame["Date"]
    start, boundary, end = (pd.Timestamp(d) for d in (spec.train_start, spec.boundary, spec.test_end))
    train_mask = (dates >= start) & (dates < boundary)
    test_mask = (dates >= boundary) & (dates <= end)
    if not train_mask.any():
        raise SplitError("empty train split")
    if not test_mask.any():
        raise SplitError("empty test split")
    train = table.with_stage("split", frame[train_mask], role="train")
    test = table.with_stage("split", frame[test_mask], role="test")
    return train, test


# -- one-hot -------------------------------------------------------------------


@dataclass
class EncodingMap:
    categories: dict[str, list[str]]

    def output_columns(self, column: str) -> list[str]:
        return [f"{column}={c}" for c in self.categories[column]]

    def to_json(self) -> str:
        return json.dumps({"categories": self.categories}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EncodingMap":
        return cls(dict(json.loads(text)["categories"]))


def one_hot(
    table: DataTable, columns: Sequence[str] = ("State", "City"), encoding: EncodingMap | None = None
) -> tuple[DataTable, EncodingMap]:
    """Indicator columns ``<col>=<category>``, categories in code-point order.

    Without ``encoding`` the categories are fitted on ``table`` (which must not
    be a test split). Categories unseen at fit time encode as all zeros.
    """
    _check_order(table, "encode")
    for c in columns:
        if c in table.numeric_columns:
            raise ConfigError(f"cannot one-hot encode numeric column {c!r}")
        if c not in table.key_columns:
            raise ConfigError(f"unknown column {c!r}")
    if encoding is None:
        if table.role == "test":
            raise PipelineOrderError("encoding must be fitted on the training split")
        encoding = EncodingMap({c: sorted(set(table.column(c))) for c in columns})
    frame = table.frame
    new_cols = []
    for c in columns:
        values = frame[c].to_numpy()
        unseen = sorted(set(values) - set(encoding.categories[c]))
        if unseen:
            log.warning("column %s: categories %s unseen at fit time, encoded as zeros", c, unseen)
        for cat, name in zip(encoding.categories[c], encoding.output_columns(c)):
            frame[name] = (values == cat).astype(np.float64)
            new_cols.append(name)
    return table.with_stage("encode", frame, encoded=table.encoded + tuple(new_cols)), encoding


# -- scaling ---------------------------------------------------------------


@dataclass
class ScalerParams:
    mean: dict[str, float]
    std: dict[str, float]
    constant: list[str]
    fitted_on: str = "train"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ScalerParams":
        return cls(**json.loads(text))


def fit_scaler(train: DataTable, columns: Sequence[str] | None = None) -> ScalerParams:
    """Population mean/std per feature. Indicator columns and the target are skipped."""
    if train.role == "test":
        raise PipelineOrderError("scaler must not be fitted on the test split")
    _check_order(train, "scale")
    if columns is None:
        columns = [c for c in train.numeric_columns if c != TARGET and c not in train.encoded]
    mean, std, constant = {}, {}, []
    for c in columns:
        if c == TARGET or c in train.encoded:
            continue
        x = train.column(c)
        x = x[~np.isnan(x)]
        m = float(x.mean()) if x.size else 0.0
        s = float(x.std(ddof=0)) if x.size else 0.0
        if s == 0.0:
            constant.append(c)
            log.warning("feature %s has zero variance; passed through unscaled", c)
            continue
        mean[c], std[c] = m, s
    return ScalerParams(mean, std, constant, train.role or "unsplit")


def apply_scaler(params: ScalerParams, table: DataTable) -> DataTable:
    _check_order(table, "scale")
    frame = table.frame
    missing = [c for c in params.mean if c not in frame.columns]
    if missing:
        raise ConfigError(f"table lacks scaled features {missing}")
    for c in params.mean:
        frame[c] = (frame[c] - params.mean[c]) / params.std[c]
    return table.with_stage("scale", frame)
