"""Seasonal ARIMA with exogenous regressors, fitted by conditional sum of squares.

The mean equation on the differenced series w_t is additive:

    w_t = c + sum phi_i w_{t-i} + sum Phi_j w_{t-jm}
            + sum theta_i e_{t-i} + sum Theta_j e_{t-jm} + beta'x_t + e_t

where x_t are the exogenous columns differenced with the same operator as
the series. Pre-sample residuals are zero and the first max(p + Pm, q + Qm)
residuals are excluded from the sum of squares.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DataError, InsufficientDataError
from .optimize import nelder_mead

log = logging.getLogger(__name__)

ROOT_MARGIN = 1.001
Z95 = 1.96


@dataclass(frozen=True)
class SarimaSpec:
    p: int = 0
    d: int = 0
    q: int = 0
    P: int = 0
    D: int = 0
    Q: int = 0
    m: int = 1
    exog: tuple[str, ...] = ()
    intercept: bool = True

    def __post_init__(self):
        orders = (self.p, self.d, self.q, self.P, self.D, self.Q)
        if any(int(o) != o or o < 0 for o in orders):
            raise ConfigError(f"orders must be non-negative integers, got {orders}")
        if self.m < 1:
            raise ConfigError("seasonal period m must be >= 1")
        if self.m == 1 and (self.P or self.D or self.Q):
            raise ConfigError("seasonal orders need m > 1")
        object.__setattr__(self, "exog", tuple(self.exog))

    @property
    def burn_in(self) -> int:
        return max(self.p + self.P * self.m, self.q + self.Q * self.m)

    @property
    def ar_start(self) -> int:
        return self.p + self.P * self.m

    @property
    def lost(self) -> int:
        return self.d + self.D * self.m

    @property
    def min_length(self) -> int:
        return 10 * (self.p + self.q + self.P + self.Q + 2)

    def n_params(self, n_exog: int | None = None) -> int:
        k = len(self.exog) if n_exog is None else n_exog
        return int(self.intercept) + self.p + self.q + self.P + self.Q + k

    def label(self) -> str:
        return f"({self.p},{self.d},{self.q})({self.P},{self.D},{self.Q},{self.m})"


@dataclass
class SarimaFit:
    spec: SarimaSpec
    intercept: float
    ar: np.ndarray
    ma: np.ndarray
    sar: np.ndarray
    sma: np.ndarray
    beta: np.ndarray
    sigma2: float
    converged: bool
    objective: float
    iterations: int
    n_used: int
    series: np.ndarray = field(repr=False)
    exog: np.ndarray | None = field(default=None, repr=False)
    residuals: np.ndarray = field(default=None, repr=False)

    @property
    def params(self) -> np.ndarray:
        head = [self.intercept] if self.spec.intercept else []
        return np.concatenate([head, self.ar, self.ma, self.sar, self.sma, self.beta])

    def to_dict(self) -> dict:
        s = self.spec
        return {
            "order": [s.p, s.d, s.q],
            "seasonal_order": [s.P, s.D, s.Q, s.m],
            "exog": list(s.exog),
            "intercept": self.intercept,
            "ar": self.ar.tolist(),
            "ma": self.ma.tolist(),
            "seasonal_ar": self.sar.tolist(),
            "seasonal_ma": self.sma.tolist(),
            "beta": dict(zip(s.exog or [f"x{i}" for i in range(len(self.beta))], self.beta.tolist())),
            "sigma2": self.sigma2,
            "converged": self.converged,
            "objective": self.objective,
            "iterations": self.iterations,
            "n_used": self.n_used,
        }


def _diff_poly(d: int, D: int, m: int) -> np.ndarray:
    """Coefficients of (1-B)^d (1-B^m)^D in ascending powers of B."""
    poly = np.array([1.0])
    for _ in range(d):
        poly = np.convolve(poly, [1.0, -1.0])
    seasonal = np.zeros(m + 1)
    seasonal[0], seasonal[m] = 1.0, -1.0
    for _ in range(D):
        poly = np.convolve(poly, seasonal)
    return poly


def difference(series, d: int = 0, D: int = 0, m: int = 1) -> np.ndarray:
    y = np.asarray(series, dtype=np.float64)
    lost = d + D * m
    if len(y) <= lost:
        raise InsufficientDataError(f"series of length {len(y)} too short for d={d}, D={D}, m={m}")
    if lost == 0:
        return y.copy()
    poly = _diff_poly(d, D, m)
    return np.convolve(y, poly, mode="valid") if y.ndim == 1 else np.column_stack(
        [np.convolve(col, poly, mode="valid") for col in y.T]
    )


def integrate(w, anchors, d: int = 0, D: int = 0, m: int = 1) -> np.ndarray:
    """Invert :func:`difference` given the first d + D*m original values."""
    anchors = np.asarray(anchors, dtype=np.float64)
    lost = d + D * m
    if len(anchors) != lost:
        raise DataError(f"need {lost} anchor values, got {len(anchors)}")
    delta = -_diff_poly(d, D, m)[1:]
    y = np.empty(lost + len(w))
    y[:lost] = anchors
    for t in range(lost, len(y)):
        y[t] = w[t - lost] + delta @ y[t - lost : t][::-1]
    return y


def _lag_poly(short, seasonal, m: int, sign: float) -> np.ndarray:
    """1 + sign*(sum short_i B^i + sum seasonal_j B^{jm}), ascending powers."""
    deg = max(len(short), len(seasonal) * m)
    poly = np.zeros(deg + 1)
    poly[0] = 1.0
    poly[1 : len(short) + 1] += sign * np.asarray(short)
    for j, v in enumerate(seasonal, start=1):
        poly[j * m] += sign * v
    return poly


def _roots_ok(poly: np.ndarray) -> bool:
    nz = np.flatnonzero(poly)
    if nz[-1] == 0:
        return True
    roots = np.roots(poly[: nz[-1] + 1][::-1])
    return bool(np.all(np.abs(roots) > ROOT_MARGIN))


def unpack(params, spec: SarimaSpec, n_exog: int = 0) -> dict:
    params = np.asarray(params, dtype=np.float64)
    i = 0
    out = {}
    if spec.intercept:
        out["intercept"] = float(params[0])
        i = 1
    else:
        out["intercept"] = 0.0
    for key, size in (("ar", spec.p), ("ma", spec.q), ("sar", spec.P), ("sma", spec.Q), ("beta", n_exog)):
        out[key] = params[i : i + size].copy()
        i += size
    if i != len(params):
        raise ConfigError(f"expected {i} parameters, got {len(params)}")
    return out


def _residuals(params, w: np.ndarray, xw: np.ndarray | None, spec: SarimaSpec) -> np.ndarray:
    """One-step residuals for every t; entries before the AR start are zero."""
    k = 0 if xw is None else xw.shape[1]
    u = unpack(params, spec, k)
    m = spec.m
    t0 = spec.ar_start
    n = len(w)
    pred = np.full(n - t0, u["intercept"])
    for i, phi in enumerate(u["ar"], start=1):
        pred += phi * w[t0 - i : n - i]
    for j, phi in enumerate(u["sar"], start=1):
        pred += phi * w[t0 - j * m : n - j * m]
    if k:
        pred += xw[t0:] @ u["beta"]
    innov = w[t0:] - pred
    e = np.zeros(n)
    ma = _lag_poly(u["ma"], u["sma"], m, 1.0)
    e[t0:] = lfilter([1.0], ma, innov) if len(ma) > 1 else innov
    return e


def css_objective(params, w, exog=None, spec: SarimaSpec = SarimaSpec()) -> float:
    """Conditional sum of squares of the already-differenced series ``w``."""
    params = np.asarray(params, dtype=np.float64)
    if not np.all(np.isfinite(params)):
        return np.inf
    w = np.asarray(w, dtype=np.float64)
    xw = None if exog is None else np.asarray(exog, dtype=np.float64).reshape(len(w), -1)
    if len(w) <= spec.burn_in:
        raise InsufficientDataError("series shorter than the burn-in")
    e = _residuals(params, w, xw, spec)
    with np.errstate(over="ignore", invalid="ignore"):
        value = float(np.sum(e[spec.burn_in :] ** 2))
    return value if np.isfinite(value) else np.inf


def _penalised(spec: SarimaSpec, n_exog: int):
    def check(params) -> bool:
        u = unpack(params, spec, n_exog)
        return _roots_ok(_lag_poly(u["ar"], u["sar"], spec.m, -1.0)) and _roots_ok(
            _lag_poly(u["ma"], u["sma"], spec.m, 1.0)
        )

    return check


def _as_exog(exog, n: int, spec: SarimaSpec) -> np.ndarray | None:
    if exog is None:
        if spec.exog:
            raise ConfigError(f"spec names exogenous columns {list(spec.exog)} but none were given")
        return None
    x = np.asarray(exog, dtype=np.float64)
    x = x.reshape(len(x), -1)
    if len(x) != n:
        raise DataError(f"exogenous rows ({len(x)}) do not match series length ({n})")
    if spec.exog and x.shape[1] != len(spec.exog):
        raise ConfigError(f"spec names {len(spec.exog)} exogenous columns, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise DataError("exogenous columns contain missing or non-finite values")
    return x


def fit_sarimax(series, exog=None, spec: SarimaSpec = SarimaSpec(), max_iter: int | None = None) -> SarimaFit:
    y = np.asarray(series, dtype=np.float64)
    if y.ndim != 1:
        raise DataError("series must be one-dimensional")
    if not np.all(np.isfinite(y)):
        raise DataError("series contains missing or non-finite values")
    if len(y) < spec.min_length:
        raise InsufficientDataError(
            f"series length {len(y)} below the minimum {spec.min_length} for {spec.label()}"
        )
    x = _as_exog(exog, len(y), spec)
    k = 0 if x is None else x.shape[1]
    w = difference(y, spec.d, spec.D, spec.m)
    xw = None if x is None else difference(x, spec.d, spec.D, spec.m)
    if len(w) <= spec.burn_in:
        raise InsufficientDataError("differenced series shorter than the burn-in")

    feasible = _penalised(spec, k)

    def objective(params):
        if not np.all(np.isfinite(params)) or not feasible(params):
            return np.inf
        return css_objective(params, w, xw, spec)

    x0 = np.zeros(spec.n_params(k))
    if spec.intercept:
        x0[0] = float(np.mean(w))
    if len(x0) == 0:
        result_x, value, iters, converged = x0, objective(x0), 0, True
    else:
        res = nelder_mead(objective, x0, max_iter=max_iter if max_iter is not None else 2000 * len(x0))
        result_x, value, iters, converged = res.x, res.fun, res.iterations, res.converged
    if not converged:
        log.warning("SARIMAX %s: simplex hit the iteration cap before converging", spec.label())
    u = unpack(result_x, spec, k)
    n_used = len(w) - spec.burn_in
    return SarimaFit(
        spec=spec,
        intercept=u["intercept"],
        ar=u["ar"],
        ma=u["ma"],
        sar=u["sar"],
        sma=u["sma"],
        beta=u["beta"],
        sigma2=value / n_used,
        converged=converged,
        objective=value,
        iterations=iters,
        n_used=n_used,
        series=y,
        exog=x,
        residuals=_residuals(result_x, w, xw, spec),
    )


def psi_weights(fit: SarimaFit, steps: int) -> np.ndarray:
    """MA(inf) weights of the full model including the differencing operator."""
    s = fit.spec
    ar = np.convolve(_lag_poly(fit.ar, fit.sar, s.m, -1.0), _diff_poly(s.d, s.D, s.m))
    ma = _lag_poly(fit.ma, fit.sma, s.m, 1.0)
    psi = np.zeros(steps)
    for j in range(steps):
        acc = ma[j] if j < len(ma) else 0.0
        for i in range(1, min(j, len(ar) - 1) + 1):
            acc -= ar[i] * psi[j - i]
        psi[j] = acc
    return psi


@dataclass
class Forecast:
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __len__(self):
        return len(self.point)


def forecast(fit: SarimaFit, steps: int, exog_future=None) -> Forecast:
    s = fit.spec
    if steps < 0:
        raise ConfigError("steps must be >= 0")
    k = 0 if fit.exog is None else fit.exog.shape[1]
    if k and exog_future is None:
        raise DataError("model uses exogenous columns; exog_future is required")
    if not k and exog_future is not None and np.size(exog_future):
        raise DataError("model has no exogenous columns but exog_future was given")
    if steps == 0:
        return Forecast(np.empty(0), np.empty(0), np.empty(0))
    xf = None
    if k:
        future = np.asarray(exog_future, dtype=np.float64).reshape(-1, k)
        if len(future) != steps:
            raise DataError(f"exog_future has {len(future)} rows, expected {steps}")
        if not np.all(np.isfinite(future)):
            raise DataError("exog_future contains missing or non-finite values")
        xf = difference(np.vstack([fit.exog, future]), s.d, s.D, s.m)[-steps:]

    w = list(difference(fit.series, s.d, s.D, s.m))
    e = list(fit.residuals)
    n = len(w)
    m = s.m
    for h in range(steps):
        t = n + h
        v = fit.intercept
        v += sum(phi * w[t - i] for i, phi in enumerate(fit.ar, start=1))
        v += sum(phi * w[t - j * m] for j, phi in enumerate(fit.sar, start=1))
        v += sum(th * e[t - i] for i, th in enumerate(fit.ma, start=1) if t - i < n)
        v += sum(th * e[t - j * m] for j, th in enumerate(fit.sma, start=1) if t - j * m < n)
        if k:
            v += float(xf[h] @ fit.beta)
        w.append(v)
        e.append(0.0)

    lost = s.lost
    if lost:
        delta = -_diff_poly(s.d, s.D, m)[1:]
        y = list(fit.series)
        for h in range(steps):
            y.append(w[n + h] + sum(delta[i] * y[-1 - i] for i in range(lost)))
        point = np.array(y[-steps:])
    else:
        point = np.array(w[n:])
    psi = psi_weights(fit, steps)
    half = Z95 * np.sqrt(max(fit.sigma2, 0.0) * np.cumsum(psi**2))
    return Forecast(point, point - half, point + half)
