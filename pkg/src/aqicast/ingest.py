"""CPCB dashboard CSV ingestion and missing-data profiling."""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, EmptyInputError, SchemaError
from .table import KEY_COLUMNS, DataTable, SourceFile

log = logging.getLogger(__name__)

MISSING_SENTINELS = frozenset({"", "na", "nan", "none"})
_DMY = re.compile(r"^(\d{1,2})-(\d{1,2})-(\d{4})$")
_YMD = re.compile(r"^(\d{4})-(\d{1,2})-(\d{1,2})$")


@dataclass(frozen=True)
class SchemaConfig:
    """Canonical column name -> accepted source header aliases."""

    keys: dict[str, list[str]]
    numeric: dict[str, list[str]]
    target: dict[str, list[str]] = field(default_factory=dict)
    signed: frozenset[str] = frozenset()

    @classmethod
    def load(cls, path=None) -> "SchemaConfig":
        if path is None:
            text = resources.files("aqicast").joinpath("data/cpcb_schema.json").read_text()
        else:
            text = Path(path).read_text(encoding="utf-8")
        try:
            raw = json.loads(text)
            return cls(
                keys=dict(raw["keys"]),
                numeric=dict(raw["numeric"]),
                target=dict(raw.get("target", {})),
                signed=frozenset(raw.get("signed", ())),
            )
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"invalid schema config: {exc}") from exc

    def resolve(self, header: Sequence[str]) -> dict[str, int]:
        """Map canonical names to header positions. Raises on missing keys."""
        norm = {_norm(h): i for i, h in enumerate(header)}
        found: dict[str, int] = {}
        for group in (self.keys, self.numeric, self.target):
            for name, aliases in group.items():
                for alias in [name, *aliases]:
                    if _norm(alias) in norm:
                        found[name] = norm[_norm(alias)]
                        break
        for key in self.keys:
            if key not in found:
                raise SchemaError(f"required key column {key!r} not found in header")
        return found

    def label_for(self, name: str) -> str:
        aliases = self.numeric.get(name) or self.target.get(name) or self.keys.get(name)
        return aliases[0] if aliases else name


def _norm(s: str) -> str:
    return " ".join(s.strip().lstrip("﻿").lower().split())


def parse_date(text: str) -> dt.date | None:
    """Accept DD-MM-YYYY or YYYY-MM-DD; anything else (or an impossible day) is None."""
    text = text.strip()
    m = _DMY.match(text)
    if m:
        day, month, year = (int(g) for g in m.groups())
    else:
        m = _YMD.match(text)
        if not m:
            return None
        year, month, day = (int(g) for g in m.groups())
    try:
        return dt.date(year, month, day)
    except ValueError:
        return None


def parse_value(text: str, allow_negative: bool = False) -> float:
    """Numeric cell -> float, NaN for sentinels, garbage and negative readings."""
    if text.strip().lower() in MISSING_SENTINELS:
        return np.nan
    try:
        value = float(text)
    except ValueError:
        return np.nan
    if not np.isfinite(value) or (value < 0 and not allow_negative):
        return np.nan
    return value


def _parse_one(path: Path, schema: SchemaConfig):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: no header row") from None
        try:
            cols = schema.resolve(header)
        except SchemaError as exc:
            raise SchemaError(f"{path}: {exc}") from None
        known = set(cols.values())
        extra = [h for i, h in enumerate(header) if i not in known]
        if extra:
            log.warning("%s: ignoring unmapped columns %s", path, extra)
        numeric = [c for c in cols if c not in schema.keys]
        rows: list[dict] = []
        reasons: Counter = Counter()
        for cells in reader:
            if not cells or all(not c.strip() for c in cells):
                reasons["blank"] += 1
                continue
            if len(cells) != len(header):
                reasons["malformed"] += 1
                continue
            date = parse_date(cells[cols["Date"]])
            if date is None:
                reasons["bad_date"] += 1
                continue
            record = {k: cells[cols[k]].strip() for k in schema.keys if k != "Date"}
            if not record.get("Station"):
                reasons["missing_station"] += 1
                continue
            record["Date"] = date
            for c in numeric:
                record[c] = parse_value(cells[cols[c]], allow_negative=c in schema.signed)
            rows.append(record)
    return header, cols, rows, reasons


def parse_cpcb_csv(paths, schema_config=None, threads: int = 1) -> DataTable:
    """Parse one or more CPCB exports into a single sorted table.

    Bad rows (unparseable dates, wrong field count, duplicate station-day)
    are dropped individually and tallied per file in ``table.provenance``.
    """
    schema = schema_config if isinstance(schema_config, SchemaConfig) else SchemaConfig.load(schema_config)
    paths = [Path(p) for p in ([paths] if isinstance(paths, (str, Path)) else paths)]
    if not paths:
        raise EmptyInputError("no input files")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parsed = list(pool.map(lambda p: _parse_one(p, schema), paths))

    seen: set = set()
    all_rows: list[dict] = []
    provenance = []
    numeric_names: list[str] = []
    for path, (_, cols, rows, reasons) in zip(paths, parsed):
        accepted = 0
        for name in cols:
            if name not in schema.keys and name not in numeric_names:
                numeric_names.append(name)
        for r in rows:
            key = (r["Station"], r["Date"])
            if key in seen:
                reasons["duplicate"] += 1
                continue
            seen.add(key)
            all_rows.append(r)
            accepted += 1
        provenance.append(SourceFile(str(path), accepted, sum(reasons.values()), dict(reasons)))
        if reasons:
            log.info("%s: accepted %d, rejected %s", path, accepted, dict(reasons))
    if not all_rows:
        raise EmptyInputError("zero accepted rows")

    order = [n for group in (schema.numeric, schema.target) for n in group if n in numeric_names]
    keys = [k for k in KEY_COLUMNS if k in schema.keys]
    frame = pd.DataFrame.from_records(all_rows, columns=keys + order)
    labels = {n: schema.label_for(n) for n in keys + order}
    return DataTable(frame, labels=labels, provenance=provenance)


# -- profiling -----------------------------------------------------------


class MissingEntry(NamedTuple):
    column: str
    label: str
    missing_count: int
    missing_percent: float


@dataclass(frozen=True)
class MissingnessProfile:
    total_rows: int
    per_column: list[MissingEntry]

    def to_json(self) -> str:
        return json.dumps(
            {"total_rows": self.total_rows, "per_column": [e._asdict() for e in self.per_column]},
            indent=2,
        )


def profile_missing(table: DataTable) -> MissingnessProfile:
    if len(table) == 0:
        raise EmptyInputError("cannot profile an empty table")
    n = len(table)
    counts = table.missing_mask().sum()
    entries = [
        MissingEntry(c, table.labels.get(c, c), int(k), round(100 * int(k) / n, 1))
        for c, k in counts.items()
        if k > 0
    ]
    # stable sort keeps schema order among equal counts
    entries.sort(key=lambda e: -e.missing_count)
    return MissingnessProfile(n, entries)


class MonthlyGap(NamedTuple):
    station: str
    year: int
    month: int
    column: str
    missing_count: int
    month_fully_missing: bool


def monthly_gap_report(table: DataTable) -> list[MonthlyGap]:
    """Per station-month-column count of missing cells (the SQL step in the source workflow)."""
    if len(table) == 0:
        raise EmptyInputError("cannot report on an empty table")
    frame = table.frame
    cols = table.numeric_columns
    mask = frame[cols].isna()
    mask["Station"] = frame["Station"]
    mask["year"] = frame["Date"].dt.year
    mask["month"] = frame["Date"].dt.month
    grouped = mask.groupby(["Station", "year", "month"], sort=True)
    missing = grouped[cols].sum()
    sizes = grouped.size()
    out = []
    for (station, year, month), row in missing.iterrows():
        size = int(sizes[(station, year, month)])
        for c in cols:
            k = int(row[c])
            if k:
                out.append(MonthlyGap(station, int(year), int(month), c, k, k == size))
    return out


def gaps_to_json(gaps: list[MonthlyGap]) -> str:
    return json.dumps([g._asdict() for g in gaps], indent=2)


def source_summary(table: DataTable) -> list[dict]:
    return [asdict(s) for s in table.provenance]
