"""Deterministic CPCB-like station-day data for tests, demos and the bundled fixture.

Pollutant levels share a per-station AR(1) log-level plus a winter peak
around mid-November. The AQI column is either a fixed nonlinear function of
the eight retained pollutants plus Gaussian noise (``target="function"``) or
the breakpoint AQI of the generated readings (``target="cpcb"``).
"""

from __future__ import annotations

import csv
import datetime as dt
from pathlib import Path

import numpy as np
import pandas as pd

from .aqi import BreakpointTable, compute_aqi_table
from .ingest import SchemaConfig
from .table import KEY_COLUMNS, DataTable

STATIONS = (
    ("Delhi", "Delhi", "Anand Vihar"),
    ("Delhi", "Delhi", "ITO"),
    ("Haryana", "Gurugram", "Vikas Sadan"),
    ("Punjab", "Amritsar", "Golden Temple"),
    ("Uttar Pradesh", "Lucknow", "Talkatora"),
)

# baseline level, seasonal amplitude, idiosyncratic log-sd
_POLLUTANTS = {
    "PM2.5": (70.0, 0.55, 0.25),
    "PM10": (140.0, 0.45, 0.25),
    "NO": (18.0, 0.40, 0.35),
    "NO2": (35.0, 0.30, 0.25),
    "NH3": (28.0, 0.20, 0.30),
    "SO2": (13.0, 0.15, 0.30),
    "CO": (1.3, 0.35, 0.30),
    "Ozone": (38.0, -0.30, 0.30),
    "Benzene": (3.0, 0.30, 0.40),
    "Toluene": (12.0, 0.30, 0.40),
    "Xylene": (2.5, 0.30, 0.50),
}

# default per-column hole probabilities, loosely shaped like a real export
HOLES = {
    "Temp": 0.80, "RH": 0.20, "Xylene": 0.60, "SR": 0.15, "WD": 0.10, "WS": 0.10,
    "Benzene": 0.10, "Toluene": 0.10, "Ozone": 0.05, "NH3": 0.03,
}


def known_function(frame: pd.DataFrame) -> np.ndarray:
    """Noise-free target used by the acceptance dataset."""
    pm25, pm10 = frame["PM2.5"].to_numpy(), frame["PM10"].to_numpy()
    no, no2, nox = frame["NO"].to_numpy(), frame["NO2"].to_numpy(), frame["NOx"].to_numpy()
    nh3, so2, co = frame["NH3"].to_numpy(), frame["SO2"].to_numpy(), frame["CO"].to_numpy()
    return (
        1.1 * pm25
        + 0.4 * pm10
        + 25.0 * np.tanh(no / 20.0)
        + 0.3 * no2 * (1.0 + co / 4.0)
        + 0.1 * nox
        + 6.0 * np.sqrt(nh3)
        + 0.2 * so2
        + 15.0 * np.log1p(co)
    )


def generate(
    n_days: int = 1000,
    stations=STATIONS,
    start: dt.date = dt.date(2017, 1, 1),
    seed: int = 42,
    holes: dict[str, float] | None = None,
    pollutant_holes: float = 0.0,
    target: str = "function",
    noise: float = 8.0,
) -> pd.DataFrame:
    """Return a station-day frame with canonical column names and ISO dates.

    ``pollutant_holes`` punches extra random holes into the eight retained
    pollutants; the target is always computed from the complete readings.
    """
    if target not in ("function", "cpcb"):
        raise ValueError("target must be 'function' or 'cpcb'")
    holes = dict(HOLES if holes is None else holes)
    rng = np.random.default_rng(seed)
    dates = pd.date_range(start, periods=n_days, freq="D")
    doy = dates.dayofyear.to_numpy()
    season = np.cos(2 * np.pi * (doy - 320) / 365.25)
    frames = []
    for s, (state, city, station) in enumerate(stations):
        srng = np.random.default_rng([seed, s])
        level = np.zeros(n_days)
        shocks = srng.normal(0, 0.2, n_days)
        for t in range(1, n_days):
            level[t] = 0.7 * level[t - 1] + shocks[t]
        site = srng.uniform(0.8, 1.25)
        cols = {}
        for name, (base, amp, sd) in _POLLUTANTS.items():
            cols[name] = base * site * np.exp(amp * season + level + srng.normal(0, sd, n_days))
        cols["NOx"] = 0.8 * (cols["NO"] + cols["NO2"]) * np.exp(srng.normal(0, 0.1, n_days))
        cols["Temp"] = 25.0 - 9.0 * season + srng.normal(0, 2.0, n_days)
        cols["RH"] = np.clip(60 + 15 * season + srng.normal(0, 10, n_days), 5, 100)
        cols["WS"] = srng.gamma(2.0, 0.8, n_days)
        cols["WD"] = srng.uniform(0, 360, n_days)
        cols["SR"] = np.clip(180 - 60 * season + srng.normal(0, 30, n_days), 0, None)
        f = pd.DataFrame(cols)
        f.insert(0, "Date", dates.date)
        f.insert(0, "Station", station)
        f.insert(0, "City", city)
        f.insert(0, "State", state)
        frames.append(f)
    frame = pd.concat(frames, ignore_index=True)
    numeric = list(SchemaConfig.load().numeric)
    frame = frame[list(KEY_COLUMNS) + numeric]
    for c in numeric:
        frame[c] = frame[c].round(2)

    if target == "function":
        frame["AQI"] = np.round(known_function(frame) + rng.normal(0, noise, len(frame)), 2)
    else:
        table = compute_aqi_table(DataTable(frame), BreakpointTable.load())[0]
        aqi = table.frame["AQI"].to_numpy()
        frame["AQI"] = np.round(aqi + rng.normal(0, noise, len(frame)), 0)

    for c, p in holes.items():
        frame.loc[rng.random(len(frame)) < p, c] = np.nan
    if pollutant_holes:
        for c in ("PM2.5", "PM10", "NO", "NO2", "NOx", "NH3", "SO2", "CO"):
            frame.loc[rng.random(len(frame)) < pollutant_holes, c] = np.nan
    return frame


def write_cpcb_csv(frame: pd.DataFrame, path, date_format: str = "%d-%m-%Y") -> None:
    """Write with dashboard-style headers and day-first dates."""
    schema = SchemaConfig.load()
    header = [schema.label_for(c) if c not in ("State", "City") else c for c in frame.columns]
    header = ["Monitoring Station" if c == "Station" else c for c in header]
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in frame.itertuples(index=False):
            out = []
            for v in row:
                if isinstance(v, dt.date):
                    out.append(v.strftime(date_format))
                elif isinstance(v, float):
                    out.append("NA" if np.isnan(v) else repr(v))
                else:
                    out.append(v)
            w.writerow(out)


def acceptance_frame(seed: int = 42) -> pd.DataFrame:
    """The 5,000-row dataset (5 stations x 1,000 days) behind the ranking check."""
    return generate(n_days=1000, seed=seed, pollutant_holes=0.01)
