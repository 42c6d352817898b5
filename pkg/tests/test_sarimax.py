import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aqicast.errors import ConfigError, DataError, InsufficientDataError
from aqicast.sarimax import (
    SarimaSpec,
    css_objective,
    difference,
    fit_sarimax,
    forecast,
    integrate,
)


def simulate_ar(phi, n, seed, mean=0.0, seasonal=None, m=1, burn=300):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=n + burn)
    x = np.zeros(n + burn)
    for t in range(n + burn):
        if seasonal is None:
            x[t] = (phi * x[t - 1] if t else 0.0) + e[t]
        else:
            x[t] = (seasonal * x[t - m] if t >= m else 0.0) + e[t]
    return x[burn:] + mean


def test_first_difference():
    assert difference([1, 3, 6, 10], d=1).tolist() == [2, 3, 4]


def test_seasonal_difference_of_pattern():
    assert np.all(difference([1, 5, 2, 8] * 5, D=1, m=4) == 0)


def test_difference_too_short():
    with pytest.raises(InsufficientDataError):
        difference([1, 2], d=1, D=1, m=4)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(0, 2), st.integers(0, 1), st.integers(2, 6),
    st.lists(st.integers(-1000, 1000), min_size=30, max_size=60),
)
def test_round_trip(d, D, m, values):
    y = np.array(values, dtype=float)
    lost = d + D * m
    if lost >= len(y) / 2:
        return
    back = integrate(difference(y, d, D, m), y[:lost], d, D, m)
    assert np.array_equal(back, y)


def test_integrate_anchor_count():
    with pytest.raises(DataError):
        integrate([1.0, 2.0], [0.0, 0.0], d=1)


def test_pure_noise_zero_params_objective():
    w = np.random.default_rng(0).normal(size=50)
    spec = SarimaSpec(1, 0, 1, intercept=False)
    assert css_objective(np.zeros(2), w, spec=spec) == pytest.approx(np.sum(w[1:] ** 2), rel=1e-12)


def test_truth_beats_zero():
    w = simulate_ar(0.8, 300, 1)
    spec = SarimaSpec(1, 0, 0, intercept=False)
    assert css_objective([0.8], w, spec=spec) < css_objective([0.0], w, spec=spec)


def test_perfect_exogenous_regressor():
    w = np.random.default_rng(2).normal(size=60)
    spec = SarimaSpec(intercept=False, exog=("x",))
    assert css_objective([1.0], w, exog=w.reshape(-1, 1), spec=spec) == pytest.approx(0, abs=1e-20)


def test_intercept_only_model():
    y = np.random.default_rng(3).normal(5, 2, 120)
    fit = fit_sarimax(y, spec=SarimaSpec())
    assert fit.intercept == pytest.approx(y.mean(), abs=1e-6)
    fc = forecast(fit, 6)
    assert np.allclose(fc.point, fit.intercept)
    width = fc.upper - fc.lower
    assert np.allclose(width, width[0])


def test_ar1_recovery_and_ols_oracle():
    y = simulate_ar(0.8, 500, 42, mean=10.0)
    fit = fit_sarimax(y, spec=SarimaSpec(1, 0, 0))
    assert 0.7 <= fit.ar[0] <= 0.9
    # the CSS minimiser for AR(1) with intercept is the least-squares regression on the lag
    X = np.column_stack([np.ones(499), y[:-1]])
    c, phi = np.linalg.lstsq(X, y[1:], rcond=None)[0]
    assert fit.ar[0] == pytest.approx(phi, abs=1e-5)
    assert fit.intercept == pytest.approx(c, abs=1e-4)


def test_seasonal_ar_recovery():
    y = simulate_ar(0.0, 600, 7, seasonal=0.5, m=12)
    fit = fit_sarimax(y, spec=SarimaSpec(P=1, m=12))
    assert 0.35 <= fit.sar[0] <= 0.65


def test_ar1_forecast_closed_form():
    y = simulate_ar(0.6, 300, 8, mean=3.0)
    fit = fit_sarimax(y, spec=SarimaSpec(1, 0, 0))
    c, phi = fit.intercept, fit.ar[0]
    mu = c / (1 - phi)
    h = np.arange(1, 11)
    want = mu + phi ** h * (y[-1] - mu)
    np.testing.assert_allclose(forecast(fit, 10).point, want, atol=1e-9)


@pytest.mark.parametrize("spec", [SarimaSpec(1, 0, 0), SarimaSpec(0, 0, 2), SarimaSpec(2, 1, 0), SarimaSpec(P=1, m=4)])
def test_interval_width_non_decreasing(spec):
    y = simulate_ar(0.5, 200, 9).cumsum() if spec.d else simulate_ar(0.5, 200, 9)
    fc = forecast(fit_sarimax(y, spec=spec), 24)
    assert np.all(np.diff(fc.upper - fc.lower) >= -1e-12)


def test_fit_never_worse_than_start():
    y = simulate_ar(0.5, 200, 10)
    spec = SarimaSpec(1, 0, 1)
    fit = fit_sarimax(y, spec=spec)
    start = np.array([y.mean(), 0.0, 0.0])
    assert fit.objective <= css_objective(start, y, spec=spec)


def test_fit_deterministic():
    y = simulate_ar(0.5, 240, 11)
    spec = SarimaSpec(1, 1, 1, 1, 0, 0, 12)
    a, b = fit_sarimax(y, spec=spec), fit_sarimax(y, spec=spec)
    assert np.array_equal(a.params, b.params) and a.sigma2 == b.sigma2


def test_exogenous_forecast_requires_future_values():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(150, 1))
    y = 2 * x[:, 0] + rng.normal(0, 0.1, 150)
    fit = fit_sarimax(y, exog=x, spec=SarimaSpec(exog=("x",)))
    assert fit.beta[0] == pytest.approx(2, abs=0.05)
    with pytest.raises(DataError):
        forecast(fit, 3)
    assert len(forecast(fit, 3, np.ones((3, 1)))) == 3


def test_steps_zero_and_errors():
    fit = fit_sarimax(simulate_ar(0.5, 100, 13), spec=SarimaSpec(1, 0, 0))
    assert len(forecast(fit, 0)) == 0
    with pytest.raises(ConfigError):
        SarimaSpec(P=1, m=1)
    with pytest.raises(InsufficientDataError):
        fit_sarimax(np.arange(10.0), spec=SarimaSpec(1, 0, 1))
    with pytest.raises(DataError):
        fit_sarimax(np.r_[np.arange(50.0), np.nan], spec=SarimaSpec(1, 0, 0))
