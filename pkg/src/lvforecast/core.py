"""Calendar arithmetic, series containers and forecast representations.

Time indices are 1-based throughout: ``t = 1`` is the 12AM-1AM hour of the
first day of a series, so ``values[t - 1]`` holds ``L_t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timedelta

import numpy as np

H = 24
WEEK = 7 * H
N_HORIZONS = 96
# Last observed hour at issue time is 7-8AM, so horizon 1 scores 8-9AM.
ORIGIN_HOUR = 8

DEFAULT_TAUS = np.round(np.arange(1, 100) / 100.0, 2)


def hour_of_day(t):
    """Hour period of the day, 1..24."""
    t = _check_time(t)
    return (t - 1) % H + 1


def period_of_week(t):
    """Hour period of the week, 1..168."""
    t = _check_time(t)
    return (t - 1) % WEEK + 1


def day_index(t):
    """Day of the series containing time index ``t`` (all 24 hours share it)."""
    t = _check_time(t)
    return (t - 1) // H + 1


def _check_time(t):
    arr = np.asarray(t)
    if not np.issubdtype(arr.dtype, np.integer):
        if np.any(arr != np.floor(arr)):
            raise ValueError("time index must be integral")
        arr = arr.astype(np.int64)
    if np.any(arr < 1):
        raise ValueError("time index must be >= 1")
    return arr if arr.ndim else int(arr)


def first_monday(year: int) -> date:
    d = date(year, 1, 1)
    return d + timedelta(days=(7 - d.weekday()) % 7)


def week_of_year(d) -> int:
    """Monday-started week counted from the first Monday of the year.

    Days before the first Monday map to 52, and weeks past 52 clamp to 52.
    """
    if isinstance(d, datetime):
        d = d.date()
    if isinstance(d, str):
        d = date.fromisoformat(d)
    if not isinstance(d, date):
        raise TypeError(f"expected a date, got {type(d).__name__}")
    delta = (d - first_monday(d.year)).days
    if delta < 0:
        return 52
    return min(delta // 7 + 1, 52)


def origin_index(day: int) -> int:
    """Time index of the daily 7AM forecast origin of ``day``."""
    if day < 1:
        raise ValueError("day must be >= 1")
    return (day - 1) * H + ORIGIN_HOUR


@dataclass(frozen=True)
class MinMaxScale:
    lo: float
    hi: float

    def __post_init__(self):
        if not np.isfinite(self.lo) or not np.isfinite(self.hi):
            raise ValueError("scale bounds must be finite")
        if self.hi <= self.lo:
            raise ValueError("cannot normalise a constant series (hi == lo)")

    @classmethod
    def from_data(cls, x) -> "MinMaxScale":
        x = np.asarray(x, dtype=float)
        x = x[np.isfinite(x)]
        if x.size == 0:
            raise ValueError("no finite values to compute a scale from")
        return cls(float(x.min()), float(x.max()))

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def normalize(self, x):
        return (np.asarray(x, dtype=float) - self.lo) / self.width

    def denormalize(self, x):
        return np.asarray(x, dtype=float) * self.width + self.lo


def minmax_normalize(series, lo, hi):
    """Affine map of ``series`` onto [0, 1] using training bounds; no clipping."""
    scale = MinMaxScale(float(lo), float(hi))
    return scale.normalize(series), scale


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LoadSeries:
    """Hourly feeder load in kWh with an observed/interpolated mask."""

    feeder_id: str
    start: datetime
    values: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("values must be a non-empty 1-d sequence")
        mask = np.ones(values.size, bool) if self.mask is None else self.mask
        mask = _frozen(mask, bool)
        if mask.shape != values.shape:
            raise ValueError("mask length must equal values length")
        obs = values[mask]
        if not np.all(np.isfinite(obs)):
            raise ValueError("observed load values must be finite")
        if np.any(obs < 0):
            raise ValueError("observed load values must be non-negative")
        start = self.start
        if isinstance(start, date) and not isinstance(start, datetime):
            start = datetime(start.year, start.month, start.day)
        if start.minute or start.second or start.microsecond:
            raise ValueError("series start must align to a whole hour")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "start", start)

    def __len__(self):
        return self.values.size

    @property
    def n_days(self) -> int:
        return len(self) // H

    def at(self, t):
        """Load at 1-based time index (scalar or array)."""
        return self.values[np.asarray(t) - 1]

    def observed(self, t):
        return self.mask[np.asarray(t) - 1]

    def timestamp(self, t: int) -> datetime:
        return self.start + timedelta(hours=int(t) - 1)

    def date_of(self, t: int) -> date:
        return self.timestamp(t).date()

    def day_of_date(self, d: date) -> int:
        """Day index whose midnight falls on date ``d`` (start must be midnight)."""
        return (d - self.start.date()).days + 1

    def truncate(self, t_end: int) -> "LoadSeries":
        """History up to and including time index ``t_end``."""
        if not 1 <= t_end <= len(self):
            raise ValueError(f"cannot truncate series of length {len(self)} at {t_end}")
        return LoadSeries(self.feeder_id, self.start, self.values[:t_end], self.mask[:t_end])

    def scaled(self, c: float) -> "LoadSeries":
        return LoadSeries(self.feeder_id, self.start, self.values * c, self.mask)


@dataclass(frozen=True)
class TemperatureData:
    """Actual hourly temperatures plus 96-hour forecast vintages.

    ``forecasts`` maps an origin date to the 96 forecast temperatures for the
    hours starting 8AM of that date.
    """

    start: datetime
    actual: np.ndarray
    forecasts: dict = field(default_factory=dict)

    def __post_init__(self):
        actual = _frozen(self.actual)
        start = self.start
        if isinstance(start, date) and not isinstance(start, datetime):
            start = datetime(start.year, start.month, start.day)
        vintages = {}
        for d, v in self.forecasts.items():
            if isinstance(d, datetime):
                d = d.date()
            v = _frozen(v)
            if v.shape != (N_HORIZONS,):
                raise ValueError(f"forecast vintage {d} has {v.size} entries, expected {N_HORIZONS}")
            vintages[d] = v
        object.__setattr__(self, "actual", actual)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "forecasts", vintages)

    def date_of_day(self, day: int) -> date:
        return self.start.date() + timedelta(days=int(day) - 1)

    def actual_at(self, t):
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.actual.size):
            raise KeyError("actual temperature not available for requested time")
        return self.actual[t - 1]

    def vintage(self, day: int) -> np.ndarray:
        d = self.date_of_day(day)
        try:
            return self.forecasts[d]
        except KeyError:
            raise KeyError(f"no temperature forecast vintage for {d}") from None

    def forecast_at(self, t, bucket: int):
        """Forecast temperature for time ``t`` from the vintage whose
        day-ahead bucket (1..4) contains ``t``; NaN where no vintage exists."""
        t = np.atleast_1d(np.asarray(t, dtype=np.int64))
        # horizon h in (24(b-1), 24b] with t - h an origin index
        h = (t - ORIGIN_HOUR - 1) % H + 1 + H * (bucket - 1)
        origin = t - h
        out = np.full(t.shape, np.nan)
        for i, (o, hh) in enumerate(zip(origin, h)):
            if o < ORIGIN_HOUR:
                continue
            v = self.forecasts.get(self.date_of_day((o - ORIGIN_HOUR) // H + 1))
            if v is not None:
                out[i] = v[hh - 1]
        return out

    def forecast_or_actual(self, t, bucket: int):
        """:meth:`forecast_at`, falling back to the actual temperature where
        no vintage covers ``t`` (history older than the forecast archive)."""
        t = np.atleast_1d(np.asarray(t, dtype=np.int64))
        out = self.forecast_at(t, bucket)
        gap = np.isnan(out) & (t >= 1) & (t <= self.actual.size)
        out[gap] = self.actual[t[gap] - 1]
        return out

    def restrict(self, origin: int, actual_future: bool) -> "TemperatureData":
        """Information set at ``origin``: vintages issued up to that day, and
        actuals up to ``origin`` unless ex-post use of actuals is allowed."""
        day = (origin - ORIGIN_HOUR) // H + 1
        last = self.date_of_day(day)
        vintages = {d: v for d, v in self.forecasts.items() if d <= last}
        actual = self.actual if actual_future else self.actual[:origin]
        return TemperatureData(self.start, actual, vintages)


@dataclass(frozen=True)
class QuantileForecast:
    """Quantiles over horizons 1..96 issued at ``origin``.

    ``values[k - 1, j]`` is the ``taus[j]`` quantile for time ``origin + k``.
    ``point`` optionally carries a point forecast that differs from the
    median; point-only forecasts have an empty tau grid.
    """

    origin: int
    taus: np.ndarray
    values: np.ndarray
    point: np.ndarray = None

    def __post_init__(self):
        taus = _frozen(self.taus).reshape(-1)
        values = _frozen(self.values)
        if values.ndim == 1 and taus.size == 0:
            values = _frozen(np.empty((values.size, 0)))
        if values.ndim != 2 or values.shape[1] != taus.size:
            raise ValueError("values must be a horizons x taus matrix")
        if taus.size:
            if np.any(taus <= 0) or np.any(taus >= 1):
                raise ValueError("taus must lie in (0, 1)")
            if np.any(np.diff(taus) <= 0):
                raise ValueError("taus must be strictly ascending")
        if not np.all(np.isfinite(values)):
            raise ValueError("forecast values must be finite")
        if np.any(np.diff(values, axis=1) < 0):
            raise ValueError("quantiles cross: values decrease in tau")
        point = self.point
        if point is not None:
            point = _frozen(point).reshape(-1)
            if point.size != values.shape[0] or not np.all(np.isfinite(point)):
                raise ValueError("point forecast must be finite with one value per horizon")
        elif taus.size == 0:
            raise ValueError("a forecast needs quantiles or a point forecast")
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "point", point)

    @property
    def n_horizons(self) -> int:
        return self.values.shape[0]

    @property
    def is_probabilistic(self) -> bool:
        return self.taus.size > 0

    @property
    def times(self) -> np.ndarray:
        return self.origin + np.arange(1, self.n_horizons + 1)

    @property
    def median(self) -> np.ndarray:
        if not self.is_probabilistic:
            return self.point
        j = np.flatnonzero(np.isclose(self.taus, 0.5))
        if j.size:
            return self.values[:, j[0]]
        return np.array([np.interp(0.5, self.taus, row) for row in self.values])

    @property
    def point_forecast(self) -> np.ndarray:
        return self.point if self.point is not None else self.median

    def __eq__(self, other):
        if not isinstance(other, QuantileForecast):
            return NotImplemented
        same_point = (self.point is None) == (other.point is None) and (
            self.point is None or np.array_equal(self.point, other.point))
        return (self.origin == other.origin and np.array_equal(self.taus, other.taus)
                and np.array_equal(self.values, other.values) and same_point)

    __hash__ = None


def rearrange(values) -> np.ndarray:
    """Sort each row so quantiles are non-decreasing in tau."""
    return np.sort(np.asarray(values, dtype=float), axis=-1)


@dataclass(frozen=True)
class SplitSpec:
    """Training end ``train_end`` (t_h) and the test days that follow it."""

    train_end: int
    test_days: tuple
    validation_weeks: int = 2

    def __post_init__(self):
        days = tuple(int(d) for d in self.test_days)
        if self.train_end < H or self.train_end % H:
            raise ValueError("train_end must be end-of-day aligned (t_h mod 24 == 0)")
        if not days:
            raise ValueError("test period must be non-empty")
        if any(b - a != 1 for a, b in zip(days, days[1:])):
            raise ValueError("test days must be contiguous")
        if days[0] <= self.train_end // H:
            raise ValueError("test days must come after train_end")
        if self.validation_weeks < 1:
            raise ValueError("validation_weeks must be >= 1")
        object.__setattr__(self, "test_days", days)

    @classmethod
    def from_days(cls, train_days: int, n_test_days: int, validation_weeks: int = 2):
        return cls(train_days * H, tuple(range(train_days + 1, train_days + 1 + n_test_days)),
                   validation_weeks)

    @property
    def train_days(self) -> int:
        return self.train_end // H

    @property
    def origins(self) -> list:
        return [origin_index(d) for d in self.test_days]

    @property
    def last_index(self) -> int:
        """Largest time index scored by any test forecast."""
        return self.origins[-1] + N_HORIZONS
