"""Benchmark forecasters: seasonal random walks, seasonal moving averages and
the fixed empirical distribution."""
from __future__ import annotations

import math

import numpy as np

from .base import BaseForecaster, check_origin, check_series, check_taus, horizon_times
from .core import H, N_HORIZONS, WEEK, QuantileForecast, period_of_week

DAY_CYCLE = H
WEEK_CYCLE = WEEK
YEAR_CYCLE = 52 * WEEK


def seasonal_walk(series, origin, k, s):
    """Load from the most recent same-phase hour at or before ``origin``.

    For ``k <= s`` this is ``L[origin + k - s]``; longer horizons step back
    whole cycles so no future value is touched. Interpolated points are
    skipped by stepping back a further cycle.
    """
    t = origin + k - s * math.ceil(k / s)
    while t >= 1:
        if t <= len(series) and series.mask[t - 1]:
            return float(series.values[t - 1])
        t -= s
    raise ValueError(f"insufficient history for a cycle-{s} walk at origin {origin}, horizon {k}")


def sma(series, origin, k, p):
    """Mean of the ``p`` previous same-week-period values, skipping masked ones."""
    if p < 1:
        raise ValueError("p must be >= 1")
    t = origin + k - WEEK * (np.arange(1, p + 1) + math.ceil(k / WEEK) - 1)
    t = t[(t >= 1) & (t <= len(series))]
    t = t[series.mask[t - 1]] if t.size else t
    if t.size == 0:
        raise ValueError(f"no usable same-period history for SMA at origin {origin}, horizon {k}")
    return float(series.values[t - 1].mean())


def _sma_holdout_sse(series, train_end, p, holdout_days):
    times = np.arange(train_end - holdout_days * H + 1, train_end + 1)
    times = times[series.mask[times - 1]]
    lags = times[:, None] - WEEK * np.arange(1, p + 1)[None, :]
    if lags.min() < 1:
        raise ValueError(f"SMA-{p} needs {p} weeks of history before the hold-out month")
    vals = series.values[lags - 1]
    ok = series.mask[lags - 1]
    counts = ok.sum(axis=1)
    use = counts > 0
    pred = np.where(ok, vals, 0.0).sum(axis=1)[use] / counts[use]
    return float(np.sum((series.values[times[use] - 1] - pred) ** 2))


def sma_optimal_p(series, train_end, p_max=12, holdout_days=28):
    """Window length minimising one-step SSE on the last ``holdout_days``
    training days (smallest ``p`` on ties)."""
    series = check_series(series)
    if train_end > len(series):
        raise ValueError("train_end beyond the series")
    if train_end < (p_max + 5) * WEEK:
        raise ValueError(f"need at least {p_max + 5} weeks of training history")
    sse = [_sma_holdout_sse(series, train_end, p, holdout_days) for p in range(1, p_max + 1)]
    return int(np.argmin(sse)) + 1


def empirical_quantile_table(series, train_end, taus, history_days=365):
    """Quantiles (type-7) of each week period over the final training year.

    Returns a 168 x len(taus) table indexed by week period - 1.
    """
    taus = check_taus(taus)
    lo = max(0, train_end - history_days * H)
    t = np.arange(lo + 1, train_end + 1)
    t = t[series.mask[t - 1]]
    slots = period_of_week(t)
    table = np.empty((WEEK, taus.size))
    for j in range(1, WEEK + 1):
        vals = series.values[t[slots == j] - 1]
        if vals.size == 0:
            raise ValueError(f"week period {j} has no observations in the final training year")
        table[j - 1] = np.quantile(vals, taus)
    return table


def empirical_forecast(series, train_end, taus=None, history_days=365):
    """Fitted empirical benchmark; see :class:`EmpiricalForecaster`."""
    return EmpiricalForecaster(taus=taus, history_days=history_days).fit(series.truncate(train_end))


def _point(origin, values):
    return QuantileForecast(origin, np.empty(0), np.empty((len(values), 0)), point=np.asarray(values))


class SeasonalWalk(BaseForecaster):
    """Seasonal random walk with cycle length ``cycle`` (24, 168 or 8736)."""

    point_only = True

    def __init__(self, cycle=WEEK_CYCLE):
        self.cycle = cycle

    def fit(self, series, temperature=None):
        series = check_series(series)
        if len(series) < self.cycle:
            raise ValueError(f"need at least {self.cycle} hours of history for cycle {self.cycle}")
        self.cycle_ = int(self.cycle)
        return self

    def predict(self, series, origin, temperature=None):
        self._check_fitted()
        origin = check_origin(series, origin)
        vals = [seasonal_walk(series, origin, k, self.cycle_) for k in range(1, N_HORIZONS + 1)]
        return _point(origin, vals)


class SeasonalMovingAverage(BaseForecaster):
    """Mean of the same week period over the previous ``weeks`` weeks."""

    point_only = True

    def __init__(self, weeks=4):
        self.weeks = weeks

    def fit(self, series, temperature=None):
        series = check_series(series)
        if self.weeks < 1:
            raise ValueError("weeks must be >= 1")
        self.weeks_ = int(self.weeks)
        return self

    def predict(self, series, origin, temperature=None):
        self._check_fitted()
        origin = check_origin(series, origin)
        vals = [sma(series, origin, k, self.weeks_) for k in range(1, N_HORIZONS + 1)]
        return _point(origin, vals)


class OptimalSeasonalMovingAverage(SeasonalMovingAverage):
    """SMA whose window is chosen per feeder on a one-month hold-out."""

    def __init__(self, max_weeks=12, holdout_days=28):
        self.max_weeks = max_weeks
        self.holdout_days = holdout_days

    def fit(self, series, temperature=None):
        series = check_series(series)
        self.weeks_ = sma_optimal_p(series, len(series) - len(series) % H,
                                    self.max_weeks, self.holdout_days)
        return self


class EmpiricalForecaster(BaseForecaster):
    """Per-week-period empirical quantiles of the final training year,
    fixed over the whole test period."""

    def __init__(self, taus=None, history_days=365):
        self.taus = taus
        self.history_days = history_days

    def fit(self, series, temperature=None):
        series = check_series(series)
        self.taus_ = check_taus(self.taus)
        train_end = len(series) - len(series) % H
        self.table_ = empirical_quantile_table(series, train_end, self.taus_, self.history_days)
        return self

    def predict(self, series, origin, temperature=None):
        self._check_fitted()
        origin = check_origin(series, origin)
        slots = period_of_week(horizon_times(origin))
        return QuantileForecast(origin, self.taus_, self.table_[slots - 1])
