"""CSV input/output and the seeded synthetic feeder generator.

File formats (UTF-8, LF line endings, ``.`` decimal point):

* load: ``timestamp,load_kwh,interpolated`` with ``YYYY-MM-DDTHH:00``
  timestamps; ``interpolated`` is 0 or 1.
* actual temperature: ``timestamp,temp_c``.
* temperature forecasts: ``origin_date,horizon_hours,temp_c``, 96 rows per
  7AM vintage.
* forecasts: ``origin,horizon,tau,value``; point forecasts use the literal
  tau ``point``.
* report: ``feeder,method,metric,horizon_day,value``.
"""
from __future__ import annotations

import csv
import math
import zlib
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .core import H, N_HORIZONS, LoadSeries, QuantileForecast, TemperatureData

TS_FORMAT = "%Y-%m-%dT%H:00"
LOAD_HEADER = ["timestamp", "load_kwh", "interpolated"]
TEMP_HEADER = ["timestamp", "temp_c"]
VINTAGE_HEADER = ["origin_date", "horizon_hours", "temp_c"]
FORECAST_HEADER = ["origin", "horizon", "tau", "value"]
REPORT_HEADER = ["feeder", "method", "metric", "horizon_day", "value"]
DEFAULT_START = date(2014, 1, 6)


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def fmt(x) -> str:
    """Shortest round-trip representation of a float."""
    return repr(float(x))


def _read_rows(path, header):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in head] != header:
            raise DataError(f"{path}: expected header {','.join(header)}")
        for i, row in enumerate(reader, start=1):
            if row:
                yield i, row


def _parse_ts(text, path, row):
    try:
        return datetime.strptime(text.strip(), TS_FORMAT)
    except ValueError:
        raise DataError(f"{path}: malformed timestamp {text!r} at row {row}") from None


def parse_load_csv(path, feeder_id=None) -> LoadSeries:
    """Read a load file; rows flagged interpolated are masked out."""
    path = Path(path)
    stamps, values, mask = [], [], []
    prev = None
    for row_no, row in _read_rows(path, LOAD_HEADER):
        if len(row) != 3:
            raise DataError(f"{path}: expected 3 fields at row {row_no}")
        ts = _parse_ts(row[0], path, row_no)
        if prev is not None and ts - prev != timedelta(hours=1):
            raise DataError(f"{path}: non-contiguous timestamp at row {row_no}")
        prev = ts
        try:
            v = float(row[1])
        except ValueError:
            raise DataError(f"{path}: malformed load at row {row_no}") from None
        if not math.isfinite(v) or v < 0:
            raise DataError(f"{path}: negative or non-finite load at row {row_no}")
        flag = row[2].strip()
        if flag not in ("0", "1"):
            raise DataError(f"{path}: interpolated flag must be 0 or 1 at row {row_no}")
        stamps.append(ts)
        values.append(v)
        mask.append(flag == "0")
    if not values:
        raise DataError(f"{path}: no data rows")
    if stamps[0].hour != 0:
        raise DataError(f"{path}: series must start at midnight")
    return LoadSeries(feeder_id or path.stem, stamps[0], np.array(values), np.array(mask))


def parse_temperature_csv(actual_path, forecast_path) -> TemperatureData:
    """Read actual temperatures and 96-hour forecast vintages."""
    actual_path, forecast_path = Path(actual_path), Path(forecast_path)
    start, temps, prev = None, [], None
    for row_no, row in _read_rows(actual_path, TEMP_HEADER):
        ts = _parse_ts(row[0], actual_path, row_no)
        if prev is not None and ts - prev != timedelta(hours=1):
            raise DataError(f"{actual_path}: non-contiguous timestamp at row {row_no}")
        start = start or ts
        prev = ts
        temps.append(float(row[1]))
    if start is None:
        raise DataError(f"{actual_path}: no data rows")
    vintages = defaultdict(dict)
    for row_no, row in _read_rows(forecast_path, VINTAGE_HEADER):
        text = row[0].strip()
        try:
            ts = datetime.fromisoformat(text) if "T" in text else None
            d = ts.date() if ts else date.fromisoformat(text)
            k = int(row[1])
        except ValueError:
            raise DataError(f"{forecast_path}: malformed vintage row {row_no}") from None
        if ts is not None and (ts.hour, ts.minute) != (7, 0):
            raise DataError(f"{forecast_path}: origin not 7AM-aligned at row {row_no}")
        if not 1 <= k <= N_HORIZONS:
            raise DataError(f"{forecast_path}: horizon outside 1..96 at row {row_no}")
        if k in vintages[d]:
            raise DataError(f"{forecast_path}: duplicate horizon at row {row_no}")
        vintages[d][k] = float(row[2])
    forecasts = {}
    for d, rows in vintages.items():
        if len(rows) != N_HORIZONS:
            raise DataError(f"{forecast_path}: vintage {d} has {len(rows)} rows, expected 96")
        forecasts[d] = np.array([rows[k] for k in range(1, N_HORIZONS + 1)])
    return TemperatureData(start, np.array(temps), forecasts)


def write_load_csv(series, path):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOAD_HEADER)
        for i, (v, m) in enumerate(zip(series.values, series.mask)):
            w.writerow([series.timestamp(i + 1).strftime(TS_FORMAT), fmt(v), "0" if m else "1"])


def write_temperature_csv(temps, actual_path, forecast_path):
    with Path(actual_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TEMP_HEADER)
        for i, v in enumerate(temps.actual):
            w.writerow([(temps.start + timedelta(hours=i)).strftime(TS_FORMAT), fmt(v)])
    with Path(forecast_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VINTAGE_HEADER)
        for d in sorted(temps.forecasts):
            for k, v in enumerate(temps.forecasts[d], start=1):
                w.writerow([d.isoformat(), k, fmt(v)])


def write_forecast_csv(forecasts, path):
    """Write one or more forecasts (a single one or an iterable)."""
    if isinstance(forecasts, QuantileForecast):
        forecasts = [forecasts]
    forecasts = list(forecasts)
    if not forecasts:
        raise ValueError("no forecasts to write")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORECAST_HEADER)
        for fc in forecasts:
            for k in range(fc.n_horizons):
                for tau, v in zip(fc.taus, fc.values[k]):
                    w.writerow([fc.origin, k + 1, fmt(tau), fmt(v)])
                if fc.point is not None:
                    w.writerow([fc.origin, k + 1, "point", fmt(fc.point[k])])


def read_forecast_csv(path):
    """Inverse of :func:`write_forecast_csv`; returns forecasts by origin order."""
    rows = defaultdict(lambda: defaultdict(dict))
    points = defaultdict(dict)
    for row_no, row in _read_rows(path, FORECAST_HEADER):
        try:
            o, k = int(row[0]), int(row[1])
            if row[2] == "point":
                points[o][k] = float(row[3])
            else:
                rows[o][float(row[2])][k] = float(row[3])
        except ValueError:
            raise DataError(f"{path}: malformed forecast row {row_no}") from None
    out = []
    for o in sorted(set(rows) | set(points)):
        taus = sorted(rows[o])
        n = max([len(points[o])] + [len(v) for v in rows[o].values()])
        values = np.array([[rows[o][t][k] for t in taus] for k in range(1, n + 1)]).reshape(n, len(taus))
        point = np.array([points[o][k] for k in range(1, n + 1)]) if points[o] else None
        out.append(QuantileForecast(o, np.array(taus), values, point=point))
    return out


def write_report_csv(report, path):
    """Write report rows ``(feeder, method, metric, horizon_day, value)`` sorted."""
    rows = list(getattr(report, "rows", report))
    if not rows:
        raise ValueError("no report rows to write")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for feeder, method, metric, slc, value in sorted(rows, key=lambda r: r[:4]):
            w.writerow([feeder, method, metric, slc, fmt(value)])


def read_report_csv(path):
    return [(r[0], r[1], r[2], r[3], float(r[4])) for _, r in _read_rows(path, REPORT_HEADER)]


# -- synthetic data ------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    n_customers: int = 50
    days: int = 400
    seed: int = 0
    annual_amplitude: float = 0.25
    temp_sensitivity: float = 0.0
    osh_fraction: float = 0.0
    noise_ar1: float = 0.6
    spike_rate: float = 0.02
    noise_level: float = 0.35
    feeder_id: str = "feeder"
    start: date = DEFAULT_START

    def __post_init__(self):
        if int(self.n_customers) < 1:
            raise ValueError("n_customers must be >= 1")
        if int(self.days) < 35:
            raise ValueError("days must be >= 35")
        for name in ("annual_amplitude", "osh_fraction", "spike_rate"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 <= self.noise_ar1 < 1:
            raise ValueError("noise_ar1 must lie in [0, 1)")
        if self.temp_sensitivity < 0 or self.noise_level < 0:
            raise ValueError("temp_sensitivity and noise_level must be non-negative")


def _bump(hours, centre, width):
    return np.exp(-0.5 * ((hours - centre) / width) ** 2)


def household_profiles():
    """Weekday and weekend 24-hour base profiles (kWh, hour 0 = 12-1AM)."""
    h = np.arange(H, dtype=float)
    weekday = 0.25 + 0.35 * _bump(h, 7.5, 1.2) + 0.15 * _bump(h, 13, 2.5) + 0.75 * _bump(h, 18.5, 2.0)
    weekend = 0.25 + 0.45 * _bump(h, 10, 2.0) + 0.3 * _bump(h, 14, 3.0) + 0.8 * _bump(h, 18.5, 2.2)
    return weekday, weekend


def feeder_rng(seed, feeder_id):
    return np.random.default_rng([int(seed) & (2 ** 63 - 1), zlib.crc32(str(feeder_id).encode())])


def synthetic_temperature(days, seed, start=DEFAULT_START, forecast_noise=0.15, noise_ar1=0.95,
                          anomaly_sd=3.0):
    """Shared synthetic weather: annual and daily cycles plus AR(1) anomalies
    with standard deviation ``anomaly_sd``.

    Four extra days are simulated so every vintage covers 96 hours.
    Vintages add a random walk across horizons, so forecast error grows
    with lead time (to ``forecast_noise * sqrt(96)`` at the last hour).
    """
    rng = np.random.default_rng([int(seed) & (2 ** 63 - 1), 0x7E3])
    n = (days + 4) * H
    t = np.arange(n)
    doy = (start.timetuple().tm_yday - 1) + t / H
    base = 10.0 + 7.0 * np.sin(2 * np.pi * (doy - 105) / 365.0)
    daily = 3.0 * np.sin(2 * np.pi * ((t % H) - 9) / H)
    noise = lfilter([1.0], [1.0, -noise_ar1], rng.normal(0, anomaly_sd * math.sqrt(1 - noise_ar1 ** 2), n))
    actual = base + daily + noise
    forecasts = {}
    for d in range(1, days + 1):
        o = (d - 1) * H + 8
        err = np.cumsum(rng.normal(0.0, forecast_noise, N_HORIZONS))
        forecasts[start + timedelta(days=d - 1)] = actual[o: o + N_HORIZONS] + err
    start_dt = datetime(start.year, start.month, start.day)
    return TemperatureData(start_dt, actual, forecasts)


def _osh_load(rng, m, days, winter):
    """Overnight storage heater charging over a seven-hour off-peak window
    whose switch-on time is jittered per night between 12AM and 2AM, with a
    per-night charge factor."""
    n_hours = days * H
    start = rng.integers(0, 3, size=(m, days))
    charge = rng.lognormal(0.0, 0.5, size=(m, days))
    hour = np.arange(n_hours) % H
    day = np.arange(n_hours) // H
    on = (hour[None, :] >= start[:, day]) & (hour[None, :] < start[:, day] + 7)
    return 4.0 * (0.2 + winter)[None, :] * charge[:, day] * on


def generate_synthetic_feeder(cfg: SynthConfig, temperature=None, chunk=64):
    """Aggregate of ``cfg.n_customers`` simulated households.

    Returns the feeder's :class:`LoadSeries` and the shared temperature
    data (simulated from ``cfg.seed`` unless supplied).
    """
    temps = temperature or synthetic_temperature(cfg.days, cfg.seed, cfg.start)
    rng = feeder_rng(cfg.seed, cfg.feeder_id)
    n_hours = cfg.days * H
    T = np.asarray(temps.actual[:n_hours], dtype=float)
    day = np.arange(n_hours) // H
    hour = np.arange(n_hours) % H
    weekday = np.array([(cfg.start + timedelta(days=int(d))).weekday() for d in range(cfg.days)])
    weekend = (weekday >= 5)[day]
    wd, we = household_profiles()
    shape = np.where(weekend, we[hour], wd[hour])
    doy = (cfg.start.timetuple().tm_yday - 1) + day
    heating = np.maximum(0.0, 15.0 - T)
    winter = 0.5 * (1.0 + np.cos(2 * np.pi * doy / 365.0))
    n_osh = int(round(cfg.osh_fraction * cfg.n_customers))
    total = np.zeros(n_hours)
    phi = cfg.noise_ar1
    for lo in range(0, cfg.n_customers, chunk):
        m = min(chunk, cfg.n_customers - lo)
        scale = rng.lognormal(0.0, 0.3, size=(m, 1))
        phase = np.pi / 2 + rng.normal(0.0, 0.1, size=(m, 1))
        annual = 1.0 + cfg.annual_amplitude * np.sin(2 * np.pi * doy[None, :] / 365.0 + phase)
        eps = rng.normal(0.0, math.sqrt(1 - phi ** 2), size=(m, n_hours))
        ar = lfilter([1.0], [1.0, -phi], eps, axis=1)
        spikes = (rng.random((m, n_hours)) < cfg.spike_rate) * rng.exponential(1.5, (m, n_hours))
        load = scale * (shape[None, :] * annual + cfg.noise_level * ar + spikes)
        load += cfg.temp_sensitivity * heating[None, :]
        osh = (lo + np.arange(m)) < n_osh
        if osh.any():
            load[osh] += scale[osh] * _osh_load(rng, int(osh.sum()), cfg.days, winter)
        total += np.maximum(load, 0.01).sum(axis=0)
    start_dt = datetime(cfg.start.year, cfg.start.month, cfg.start.day)
    return LoadSeries(cfg.feeder_id, start_dt, total), temps
