"""aqicast: AQI computation, diagnostics and from-scratch forecasting models."""

__version__ = "0.1.0"
