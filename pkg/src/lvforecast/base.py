"""Estimator plumbing shared by all forecasters.

Forecasters follow the scikit-learn conventions: hyperparameters are stored
untouched by ``__init__``, ``fit`` returns ``self`` and sets trailing
underscore attributes, and ``get_params``/``set_params``/``clone`` work.
Instead of ``(X, y)`` they consume a :class:`~lvforecast.core.LoadSeries`
plus optional :class:`~lvforecast.core.TemperatureData`.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import DEFAULT_TAUS, N_HORIZONS, LoadSeries, TemperatureData

TEMPERATURE_MODES = ("none", "forecast", "actual")


def check_series(series) -> LoadSeries:
    if not isinstance(series, LoadSeries):
        raise TypeError(f"expected a LoadSeries, got {type(series).__name__}")
    return series


def check_taus(taus) -> np.ndarray:
    taus = DEFAULT_TAUS if taus is None else np.asarray(taus, dtype=float).ravel()
    if taus.size == 0 or np.any(taus <= 0) or np.any(taus >= 1) or np.any(np.diff(taus) <= 0):
        raise ValueError("taus must be a strictly ascending grid inside (0, 1)")
    return taus


def check_origin(series: LoadSeries, origin: int) -> int:
    origin = int(origin)
    if origin < 1 or origin > len(series):
        raise ValueError(f"origin {origin} outside the available history (length {len(series)})")
    return origin


def check_temperature(temperature, mode: str):
    if mode not in TEMPERATURE_MODES:
        raise ValueError(f"temperature mode must be one of {TEMPERATURE_MODES}")
    if mode == "none":
        return None
    if not isinstance(temperature, TemperatureData):
        raise ValueError(f"temperature mode {mode!r} requires TemperatureData")
    return temperature


def horizon_times(origin: int, n_horizons: int = N_HORIZONS) -> np.ndarray:
    return origin + np.arange(1, n_horizons + 1)


class BaseForecaster(BaseEstimator):
    """Common interface for every forecasting method.

    ``refit`` tells the rolling harness whether the method is retrained at
    every origin (``"daily"``) or once on the training period (``"once"``).
    """

    refit = "once"
    point_only = False
    supports_temperature = False

    def fit(self, series, temperature=None):
        raise NotImplementedError

    def predict(self, series, origin, temperature=None):
        raise NotImplementedError

    def _check_fitted(self):
        check_is_fitted(self)

    @property
    def name(self) -> str:
        return type(self).__name__
