"""Column-oriented station-day table shared by every pipeline stage."""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, EmptyInputError, SchemaError

KEY_COLUMNS = ("State", "City", "Station", "Date")
TARGET = "AQI"
META_SUFFIX = ".meta.json"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # "key" or "numeric"
    label: str | None = None


@dataclass(frozen=True)
class SourceFile:
    path: str
    accepted: int
    rejected: int
    reasons: Mapping[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class StationDayRecord:
    state: str
    city: str
    station: str
    date: dt.date
    readings: Mapping[str, float | None]
    aqi: float | None = None


class DataTable:
    """Station-day rows sorted by (Station, Date); NaN marks a missing cell.

    The wrapped frame is treated as immutable: every transformation returns a
    new table. ``stages`` records which preprocessing steps have been applied,
    ``role`` is ``"train"``/``"test"`` once the table came out of a split, and
    ``encoded`` lists indicator columns produced by one-hot encoding.
    """

    def __init__(
        self,
        frame: pd.DataFrame,
        labels: Mapping[str, str] | None = None,
        provenance: Sequence[SourceFile] = (),
        stages: Sequence[str] = (),
        role: str | None = None,
        encoded: Sequence[str] = (),
        sort: bool = True,
    ):
        missing = [k for k in ("Station", "Date") if k not in frame.columns]
        if missing:
            raise SchemaError(f"table lacks required key column(s): {', '.join(missing)}")
        if len(set(frame.columns)) != len(frame.columns):
            raise SchemaError("duplicate column names")
        keys = [c for c in KEY_COLUMNS if c in frame.columns]
        numeric = [c for c in frame.columns if c not in KEY_COLUMNS]
        frame = frame[keys + numeric].copy()
        frame["Date"] = pd.to_datetime(frame["Date"]).dt.normalize()
        for c in numeric:
            if not pd.api.types.is_numeric_dtype(frame[c]):
                raise SchemaError(f"column {c!r} is not numeric")
            frame[c] = frame[c].astype(np.float64)
        for c in keys:
            if c != "Date":
                frame[c] = frame[c].astype(str)
        if sort:
            frame = frame.sort_values(["Station", "Date"], kind="mergesort")
        self._frame = frame.reset_index(drop=True)
        self.labels = dict(labels or {})
        self.provenance = tuple(provenance)
        self.stages = tuple(stages)
        self.role = role
        self.encoded = tuple(encoded)

    # -- accessors -------------------------------------------------------

    @property
    def frame(self) -> pd.DataFrame:
        """A defensive copy of the underlying frame."""
        return self._frame.copy()

    def __len__(self) -> int:
        return len(self._frame)

    def __repr__(self) -> str:
        return (
            f"DataTable(rows={len(self)}, numeric={len(self.numeric_columns)}, "
            f"stages={list(self.stages)}, role={self.role!r})"
        )

    @property
    def key_columns(self) -> list[str]:
        return [c for c in self._frame.columns if c in KEY_COLUMNS]

    @property
    def numeric_columns(self) -> list[str]:
        return [c for c in self._frame.columns if c not in KEY_COLUMNS]

    @property
    def schema(self) -> list[ColumnSpec]:
        return [
            ColumnSpec(c, "key" if c in KEY_COLUMNS else "numeric", self.labels.get(c, c))
            for c in self._frame.columns
        ]

    def column(self, name: str) -> np.ndarray:
        if name not in self._frame.columns:
            raise SchemaError(f"unknown column {name!r}")
        return self._frame[name].to_numpy(copy=True)

    def records(self) -> Iterator[StationDayRecord]:
        readings_cols = [c for c in self.numeric_columns if c != TARGET and c not in self.encoded]
        for row in self._frame.itertuples(index=False, name=None):
            values = dict(zip(self._frame.columns, row))
            readings = {
                c: (None if np.isnan(values[c]) else float(values[c])) for c in readings_cols
            }
            aqi = values.get(TARGET)
            yield StationDayRecord(
                state=values.get("State", ""),
                city=values.get("City", ""),
                station=values["Station"],
                date=values["Date"].date(),
                readings=readings,
                aqi=None if aqi is None or np.isnan(aqi) else float(aqi),
            )

    def replace(self, frame: pd.DataFrame | None = None, **changes) -> "DataTable":
        """Return a new table sharing metadata except for ``changes``."""
        kwargs = dict(
            labels=self.labels,
            provenance=self.provenance,
            stages=self.stages,
            role=self.role,
            encoded=self.encoded,
        )
        kwargs.update(changes)
        return DataTable(self._frame if frame is None else frame, **kwargs)

    def with_stage(self, stage: str, frame: pd.DataFrame | None = None, **changes) -> "DataTable":
        return self.replace(frame, stages=self.stages + (stage,), **changes)

    def missing_mask(self) -> pd.DataFrame:
        return self._frame[self.numeric_columns].isna()

    def equals(self, other: "DataTable") -> bool:
        """Same columns, same rows, same missingness mask, same values."""
        a, b = self._frame, other._frame
        if list(a.columns) != list(b.columns) or len(a) != len(b):
            return False
        return bool(a.equals(b))

    # -- canonical CSV ---------------------------------------------------

    def to_csv(self, path, sidecar: bool = True) -> None:
        """Write the frame with ISO dates and empty cells for missing values.

        With ``sidecar`` the stages, role, encoded columns and labels go to
        ``<path>.meta.json`` so :meth:`from_csv` can restore them.
        """
        out = self._frame.copy()
        out["Date"] = out["Date"].dt.strftime("%Y-%m-%d")
        out.to_csv(path, index=False, na_rep="", float_format=None, lineterminator="\n")
        if sidecar:
            meta = {
                "stages": list(self.stages),
                "role": self.role,
                "encoded": list(self.encoded),
                "labels": self.labels,
            }
            Path(f"{path}{META_SUFFIX}").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path, **kwargs) -> "DataTable":
        frame = pd.read_csv(
            path,
            dtype={c: str for c in KEY_COLUMNS if c != "Date"},
            keep_default_na=False,
            na_values=[""],
            float_precision="round_trip",
        )
        if frame.empty:
            raise EmptyInputError(f"{path}: no rows")
        frame["Date"] = pd.to_datetime(frame["Date"], format="%Y-%m-%d")
        meta_path = Path(f"{path}{META_SUFFIX}")
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
            for key in ("stages", "role", "encoded", "labels"):
                kwargs.setdefault(key, meta.get(key))
        return cls(frame, **{k: v for k, v in kwargs.items() if v is not None})


def design_matrix(
    table: DataTable, target: str = TARGET, features: Sequence[str] | None = None
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Split a table into (X, y, feature names), dropping rows with no target."""
    if target not in table.numeric_columns:
        raise ConfigError(f"target column {target!r} not in table")
    if features is None:
        features = [c for c in table.numeric_columns if c != target]
    frame = table.frame
    keep = frame[target].notna().to_numpy()
    X = frame.loc[keep, list(features)].to_numpy(dtype=np.float64)
    y = frame.loc[keep, target].to_numpy(dtype=np.float64)
    return X, y, list(features)
