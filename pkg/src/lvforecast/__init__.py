"""Probabilistic day-ahead load forecasting for low-voltage feeders."""
from .core import (DEFAULT_TAUS, H, N_HORIZONS, WEEK, LoadSeries, MinMaxScale, QuantileForecast,
                   SplitSpec, TemperatureData)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TAUS", "H", "N_HORIZONS", "WEEK", "LoadSeries", "MinMaxScale",
    "QuantileForecast", "SplitSpec", "TemperatureData",
]
