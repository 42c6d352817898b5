"""Exploratory statistics and time-series diagnostics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, InsufficientDataError
from .preprocess import quantile_linear
from .table import TARGET, DataTable

DESCRIBE_ROWS = ("count", "mean", "std", "min", "25%", "50%", "75%", "max")


def describe(table: DataTable, columns: Sequence[str] | None = None) -> pd.DataFrame:
    """count/mean/std/min/quartiles/max per column (sample std, linear quantiles)."""
    cols = list(columns) if columns is not None else table.numeric_columns
    if not cols:
        raise DataError("no numeric columns to describe")
    out = {}
    for c in cols:
        x = table.column(c)
        x = np.sort(x[~np.isnan(x)])
        if x.size == 0:
            out[c] = [0.0] + [np.nan] * 7
            continue
        std = float(x.std(ddof=1)) if x.size > 1 else np.nan
        out[c] = [
            float(x.size),
            float(x.mean()),
            std,
            float(x[0]),
            quantile_linear(x, 0.25),
            quantile_linear(x, 0.5),
            quantile_linear(x, 0.75),
            float(x[-1]),
        ]
    return pd.DataFrame(out, index=list(DESCRIBE_ROWS))


def pearson_matrix(table: DataTable, columns: Sequence[str] | None = None) -> pd.DataFrame:
    """Pairwise-complete Pearson correlations; NaN where a variance is zero."""
    cols = list(columns) if columns is not None else table.numeric_columns
    if len(table) < 2:
        raise InsufficientDataError("correlation needs at least two rows")
    data = [table.column(c) for c in cols]
    k = len(cols)
    r = np.full((k, k), np.nan)
    for i in range(k):
        for j in range(i, k):
            r[i, j] = r[j, i] = _pearson(data[i], data[j])
    return pd.DataFrame(r, index=cols, columns=cols)


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    both = ~np.isnan(x) & ~np.isnan(y)
    if both.sum() < 2:
        return np.nan
    a = x[both] - x[both].mean()
    b = y[both] - y[both].mean()
    sa, sb = np.sqrt(a @ a), np.sqrt(b @ b)
    if sa == 0 or sb == 0:
        return np.nan
    if x is y:
        return 1.0
    return float(np.clip((a @ b) / (sa * sb), -1.0, 1.0))


def monthly_heatmap(
    table: DataTable, by: str, value: str, column: str = TARGET
) -> pd.DataFrame:
    """Mean of ``column`` per (year, month) for rows where ``by == value``.

    Rows are years, columns months 1-12; months without data are NaN.
    """
    if by not in table.key_columns:
        raise ConfigError(f"cannot group by {by!r}")
    frame = table.frame
    available = sorted(frame[by].unique())
    if value not in available:
        raise DataError(f"unknown {by} {value!r}; available: {', '.join(available)}")
    sub = frame[frame[by] == value]
    grid = sub.groupby([sub["Date"].dt.year.rename("year"), sub["Date"].dt.month.rename("month")])[
        column
    ].mean()
    grid = grid.unstack("month").reindex(columns=range(1, 13))
    return grid


def monthly_heatmaps(table: DataTable, by: str, column: str = TARGET) -> dict[str, pd.DataFrame]:
    return {v: monthly_heatmap(table, by, v, column) for v in sorted(set(table.column(by)))}


def monthly_comovement(
    table: DataTable, columns: Sequence[str] = ("PM2.5", "PM10", TARGET), by: str | None = None
) -> pd.DataFrame:
    """Monthly means of several columns side by side, for co-movement plots."""
    frame = table.frame
    cols = [c for c in columns if c in frame.columns]
    keys = [frame["Date"].dt.to_period("M").astype(str).rename("month")]
    if by is not None:
        keys.insert(0, frame[by])
    return frame.groupby(keys)[cols].mean()


# -- seasonal decomposition --------------------------------------------------


@dataclass
class DecompositionResult:
    observed: np.ndarray
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    period: int

    @property
    def pattern(self) -> np.ndarray:
        """One period of the seasonal component, phase 0 first."""
        return self.seasonal[: self.period].copy()

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"observed": self.observed, "trend": self.trend, "seasonal": self.seasonal, "residual": self.residual}
        )


def centered_moving_average(x: np.ndarray, m: int) -> np.ndarray:
    """Window-m centred mean; a 2 x m average when m is even. Ends are NaN."""
    if m % 2:
        w = np.full(m, 1.0 / m)
    else:
        w = np.r_[0.5, np.ones(m - 1), 0.5] / m
    half = len(w) // 2
    out = np.full(len(x), np.nan)
    out[half : len(x) - half] = np.convolve(x, w, mode="valid")
    return out


def seasonal_decompose(series, m: int) -> DecompositionResult:
    x = np.asarray(series, dtype=np.float64)
    if m < 2:
        raise ConfigError("period must be at least 2")
    if len(x) < 2 * m:
        raise InsufficientDataError(f"need at least {2 * m} observations for period {m}")
    trend = centered_moving_average(x, m)
    detrended = x - trend
    phase_means = np.array([np.nanmean(detrended[i::m]) for i in range(m)])
    phase_means -= phase_means.mean()
    seasonal = np.resize(phase_means, len(x))
    return DecompositionResult(x, trend, seasonal, x - trend - seasonal, m)


# -- ADF -----------------------------------------------------------------------


def _load_critical_values() -> dict[str, dict[float, tuple[float, ...]]]:
    text = resources.files("aqicast").joinpath("data/adf_critical_values.csv").read_text()
    table: dict[str, dict[float, tuple[float, ...]]] = {}
    for row in csv.DictReader(text.splitlines()):
        coeffs = tuple(float(row[k]) for k in ("b0", "b1", "b2", "b3"))
        table.setdefault(row["regression"], {})[float(row["level"])] = coeffs
    return table


_CRITICAL = _load_critical_values()


def critical_values(regression: str, nobs: int) -> dict[str, float]:
    """Finite-sample response-surface critical values at 1/5/10%."""
    try:
        levels = _CRITICAL[regression]
    except KeyError:
        raise ConfigError(f"unknown ADF regression variant {regression!r}") from None
    return {
        f"{int(level * 100)}%": sum(b / nobs**i for i, b in enumerate(coeffs))
        for level, coeffs in sorted(levels.items())
    }


def schwert_lag(n: int) -> int:
    return int(math.floor(12 * (n / 100) ** 0.25))


@dataclass
class AdfReport:
    statistic: float
    lags: int
    nobs: int
    regression: str
    critical_values: dict[str, float]
    pvalue_bracket: str
    verdict: str

    def as_dict(self) -> dict:
        return self.__dict__.copy()


def adf_test(series, max_lag: int | None = None, regression: str = "c") -> AdfReport:
    """Augmented Dickey-Fuller test with a fixed number of lagged differences.

    Regresses dy_t on y_{t-1}, dy_{t-1..t-k} and the deterministic terms
    (none, constant, or constant + trend) and reports the t-ratio on y_{t-1}.
    """
    y = np.asarray(series, dtype=np.float64)
    n = len(y)
    k = schwert_lag(n) if max_lag is None else int(max_lag)
    if k < 0:
        raise ConfigError("max_lag must be >= 0")
    if n < k + 10:
        raise InsufficientDataError(f"ADF with {k} lags needs at least {k + 10} observations")
    if np.var(y) == 0:
        raise DataError("series has zero variance")

    dy = np.diff(y)
    nobs = len(dy) - k
    cols = [y[k : k + nobs]]  # y_{t-1}
    for j in range(1, k + 1):
        cols.append(dy[k - j : k - j + nobs])
    if regression in ("c", "ct"):
        cols.append(np.ones(nobs))
    if regression == "ct":
        cols.append(np.arange(1, nobs + 1, dtype=np.float64))
    if regression not in ("n", "c", "ct"):
        raise ConfigError(f"unknown ADF regression variant {regression!r}")
    X = np.column_stack(cols)
    target = dy[k:]
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ coef
    dof = nobs - X.shape[1]
    sigma2 = resid @ resid / dof
    cov = sigma2 * np.linalg.inv(X.T @ X)
    stat = float(coef[0] / np.sqrt(cov[0, 0]))

    cv = critical_values(regression, nobs)
    if stat < cv["1%"]:
        bracket = "<0.01"
    elif stat < cv["5%"]:
        bracket = "<0.05"
    elif stat < cv["10%"]:
        bracket = "<0.10"
    else:
        bracket = ">=0.10"
    verdict = "stationary" if stat < cv["5%"] else "non-stationary"
    return AdfReport(stat, k, nobs, regression, cv, bracket, verdict)


# -- ACF / PACF -----------------------------------------------------------------


def _check_series(x: np.ndarray, nlags: int) -> None:
    if nlags < 0:
        raise ConfigError("nlags must be >= 0")
    if nlags >= len(x) / 2:
        raise InsufficientDataError(f"nlags={nlags} must be below half the series length {len(x)}")
    if np.var(x) == 0:
        raise DataError("series has zero variance")


def acf(series, nlags: int) -> np.ndarray:
    """Autocorrelations at lags 0..nlags using the 1/n autocovariance."""
    x = np.asarray(series, dtype=np.float64)
    _check_series(x, nlags)
    d = x - x.mean()
    n = len(d)
    c = np.array([d[: n - k] @ d[k:] / n for k in range(nlags + 1)])
    return c / c[0]


def pacf(series, nlags: int) -> np.ndarray:
    """Partial autocorrelations at lags 0..nlags (Durbin-Levinson)."""
    r = acf(series, nlags)
    out = np.empty(nlags + 1)
    out[0] = 1.0
    if nlags == 0:
        return out
    phi = np.array([r[1]])
    out[1] = r[1]
    for k in range(2, nlags + 1):
        num = r[k] - phi @ r[k - 1 : 0 : -1]
        den = 1.0 - phi @ r[1:k]
        pkk = num / den
        phi = np.r_[phi - pkk * phi[::-1], pkk]
        out[k] = pkk
    return out


def acf_band(n: int, z: float = 1.96) -> float:
    """Half-width of the white-noise confidence band."""
    return z / math.sqrt(n)
