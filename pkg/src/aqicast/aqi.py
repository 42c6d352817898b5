"""CPCB sub-indices and overall AQI.

A sub-index maps a pollutant concentration onto the AQI scale by linear
interpolation inside a breakpoint segment; the AQI of a station-day is the
largest sub-index, provided at least three pollutants were measured and one
of them is PM2.5 or PM10.
"""

from __future__ import annotations

import bisect
import csv
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .errors import ConfigError, DomainError
from .table import TARGET, DataTable, StationDayRecord

log = logging.getLogger(__name__)

PARTICULATES = ("PM2.5", "PM10")
MIN_POLLUTANTS = 3
REASON_FEW = "fewer than three pollutants"
REASON_NO_PM = "no particulate matter sub-index"


@dataclass(frozen=True)
class Segment:
    conc_lo: float
    conc_hi: float
    index_lo: float
    index_hi: float

    @property
    def slope(self) -> float:
        return (self.index_hi - self.index_lo) / (self.conc_hi - self.conc_lo)


class BreakpointTable:
    """Per-pollutant contiguous breakpoint segments.

    Published CPCB bands leave small gaps between one band's upper
    concentration and the next band's lower one (e.g. PM2.5 60 -> 61). When
    ``bridge_gaps`` is set those gaps are closed with a linear segment joining
    the neighbouring endpoints so the sub-index is continuous everywhere.
    """

    def __init__(self, segments: Mapping[str, list[Segment]], bridge_gaps: bool = True):
        self.segments: dict[str, tuple[Segment, ...]] = {}
        for pollutant, segs in segments.items():
            segs = sorted(segs, key=lambda s: s.conc_lo)
            if bridge_gaps:
                segs = _bridge(segs)
            _validate(pollutant, segs)
            self.segments[pollutant] = tuple(segs)
        self._lows = {p: [s.conc_lo for s in segs] for p, segs in self.segments.items()}

    @classmethod
    def load(cls, path=None, bridge_gaps: bool = True) -> "BreakpointTable":
        if path is None:
            text = resources.files("aqicast").joinpath("data/cpcb_breakpoints.csv").read_text()
        else:
            text = Path(path).read_text(encoding="utf-8")
        rows = list(csv.DictReader(text.splitlines()))
        if not rows:
            raise ConfigError("breakpoint file has no rows")
        segs: dict[str, list[Segment]] = {}
        try:
            for r in rows:
                seg = Segment(*(float(r[k]) for k in ("conc_lo", "conc_hi", "index_lo", "index_hi")))
                segs.setdefault(r["pollutant"].strip(), []).append(seg)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"malformed breakpoint row: {exc}") from exc
        return cls(segs, bridge_gaps=bridge_gaps)

    @property
    def pollutants(self) -> list[str]:
        return list(self.segments)

    def segment_for(self, pollutant: str, conc: float) -> Segment:
        segs = self._segments(pollutant)
        i = bisect.bisect_right(self._lows[pollutant], conc) - 1
        return segs[max(i, 0)]

    def _segments(self, pollutant: str) -> tuple[Segment, ...]:
        try:
            return self.segments[pollutant]
        except KeyError:
            raise ConfigError(f"pollutant {pollutant!r} not in breakpoint table") from None


def _bridge(segs: list[Segment]) -> list[Segment]:
    out = [segs[0]]
    for s in segs[1:]:
        prev = out[-1]
        if s.conc_lo > prev.conc_hi:
            out.append(Segment(prev.conc_hi, s.conc_lo, prev.index_hi, s.index_lo))
        out.append(s)
    return out


def _validate(pollutant: str, segs: list[Segment]) -> None:
    if not segs:
        raise ConfigError(f"{pollutant}: no segments")
    for s in segs:
        if min(s.conc_lo, s.conc_hi, s.index_lo, s.index_hi) < 0 or s.conc_hi <= s.conc_lo:
            raise ConfigError(f"{pollutant}: invalid segment {s}")
    for a, b in zip(segs, segs[1:]):
        if a.conc_hi != b.conc_lo:
            raise ConfigError(f"{pollutant}: segments not contiguous at {a.conc_hi} / {b.conc_lo}")
        if b.index_lo < a.index_hi:
            raise ConfigError(f"{pollutant}: index ranges decrease at {b.conc_lo}")
    if segs[0].conc_lo != 0:
        raise ConfigError(f"{pollutant}: first segment must start at 0")
    if segs[-1].index_hi != 500:
        raise ConfigError(f"{pollutant}: top segment must end at index 500")


def sub_index(pollutant: str, conc: float, table: BreakpointTable) -> float:
    """Piecewise-linear sub-index; above the top band the top slope is extended."""
    if conc < 0 or np.isnan(conc):
        raise DomainError(f"{pollutant}: concentration must be >= 0, got {conc}")
    s = table.segment_for(pollutant, conc)
    return s.index_lo + (s.index_hi - s.index_lo) / (s.conc_hi - s.conc_lo) * (conc - s.conc_lo)


def sub_index_array(pollutant: str, conc: np.ndarray, table: BreakpointTable) -> np.ndarray:
    """Vectorised :func:`sub_index`; NaN in, NaN out."""
    segs = table._segments(pollutant)
    conc = np.asarray(conc, dtype=np.float64)
    if np.any(conc < 0):
        raise DomainError(f"{pollutant}: negative concentration")
    lo = np.array([s.conc_lo for s in segs])
    idx = np.clip(np.searchsorted(lo, conc, side="right") - 1, 0, len(segs) - 1)
    hi = np.array([s.conc_hi for s in segs])
    ilo = np.array([s.index_lo for s in segs])
    ihi = np.array([s.index_hi for s in segs])
    out = ilo[idx] + (ihi[idx] - ilo[idx]) / (hi[idx] - lo[idx]) * (conc - lo[idx])
    out[np.isnan(conc)] = np.nan
    return out


@dataclass(frozen=True)
class AqiResult:
    sub_indices: dict[str, float]
    aqi: float | None
    dominant: str | None
    valid: bool
    reason: str = ""


def _validity(present: list[str]) -> str:
    if len(present) < MIN_POLLUTANTS:
        return REASON_FEW
    if not any(p in present for p in PARTICULATES):
        return REASON_NO_PM
    return ""


def compute_aqi(record: StationDayRecord, table: BreakpointTable) -> AqiResult:
    subs: dict[str, float] = {}
    for p in table.pollutants:
        conc = record.readings.get(p)
        if conc is None or np.isnan(conc):
            continue
        subs[p] = sub_index(p, conc, table)
    reason = _validity(list(subs))
    if reason:
        return AqiResult(subs, None, None, False, reason)
    dominant = max(subs, key=lambda p: subs[p])  # first maximiser in table order
    return AqiResult(subs, subs[dominant], dominant, True)


@dataclass
class AqiTableReport:
    rows: int
    valid: int
    invalid_reasons: dict[str, int]
    compared: int = 0
    disagreements: int = 0
    max_abs_diff: float = 0.0


def compute_aqi_table(
    table: DataTable,
    breakpoints: BreakpointTable,
    mode: str = "recompute",
    with_sub_indices: bool = False,
    tolerance: float = 0.5,
) -> tuple[DataTable, AqiTableReport]:
    """Attach an ``AQI`` column to every row.

    ``mode="recompute"`` overwrites any existing AQI column with computed
    values; ``"passthrough"`` keeps supplied values and only fills gaps. In both
    modes supplied values are compared with recomputed ones and disagreements
    beyond ``tolerance`` are counted in the report. Invalid rows get NaN.
    """
    if mode not in ("recompute", "passthrough"):
        raise ConfigError(f"unknown AQI mode {mode!r}")
    frame = table.frame
    present = [p for p in breakpoints.pollutants if p in frame.columns]
    n = len(frame)
    subs = np.full((n, len(present)), np.nan)
    for j, p in enumerate(present):
        subs[:, j] = sub_index_array(p, frame[p].to_numpy(), breakpoints)
    have = ~np.isnan(subs)
    count = have.sum(axis=1)
    pm = np.zeros(n, dtype=bool)
    for j, p in enumerate(present):
        if p in PARTICULATES:
            pm |= have[:, j]
    valid = (count >= MIN_POLLUTANTS) & pm
    computed = np.full(n, np.nan)
    if valid.any():
        computed[valid] = np.nanmax(subs[valid], axis=1)

    reasons = {
        REASON_FEW: int((count < MIN_POLLUTANTS).sum()),
        REASON_NO_PM: int(((count >= MIN_POLLUTANTS) & ~pm).sum()),
    }
    report = AqiTableReport(rows=n, valid=int(valid.sum()), invalid_reasons=reasons)
    result = computed
    if TARGET in frame.columns:
        supplied = frame[TARGET].to_numpy()
        both = ~np.isnan(supplied) & ~np.isnan(computed)
        diff = np.abs(supplied[both] - computed[both])
        report.compared = int(both.sum())
        report.disagreements = int((diff > tolerance).sum())
        report.max_abs_diff = float(diff.max()) if diff.size else 0.0
        if report.disagreements:
            log.warning("%d supplied AQI values disagree with recomputation", report.disagreements)
        if mode == "passthrough":
            result = np.where(np.isnan(supplied), computed, supplied)
    frame[TARGET] = result
    if with_sub_indices:
        for j, p in enumerate(present):
            frame[f"SI_{p}"] = subs[:, j]
    return table.replace(pd.DataFrame(frame)), report
