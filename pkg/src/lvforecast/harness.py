"""Rolling-origin evaluation, temperature-mode sweeps and scaling analysis."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np
from sklearn.base import clone

from .ar import ARForecaster
from .benchmarks import (DAY_CYCLE, WEEK_CYCLE, YEAR_CYCLE, EmpiricalForecaster,
                         OptimalSeasonalMovingAverage, SeasonalMovingAverage, SeasonalWalk)
from .core import DEFAULT_TAUS, H, N_HORIZONS, SplitSpec, hour_of_day, origin_index
from .hwt import HWTForecaster
from .ingest import fmt, write_forecast_csv, write_report_csv
from .kde import KDEForecaster, canonical_method
from .metrics import ScoreNormalizer, crps_from_quantiles, ks_two_sample, pinball, power_law_fit
from .seasonal_qr import STForecaster

log = logging.getLogger(__name__)

METRICS = ("MAPE", "RMAE", "RCRPS", "PINBALL")
SLICES = ("all",) + tuple(f"day{d}" for d in range(1, 5)) + tuple(
    f"hour{k}" for k in range(1, N_HORIZONS + 1))
TEMPERATURE_METHODS = ("ST", "SnT", "ARWD", "ARWDY", "CKD")
MODES = ("none", "forecast", "actual")


class ConfigError(ValueError):
    """Invalid evaluation configuration."""


# -- method registry -----------------------------------------------------------

def _sma_weeks(name):
    if name.startswith("SMA-") and name.endswith("W") and name[4:-1].isdigit():
        return int(name[4:-1])
    return None


def method_names():
    return ("LD", "LW", "LY", "SMA-4W", "SMA", "Empirical", "ST", "SnT", "ARWD", "ARWDY",
            "HWT", "KDE-W", "KDE-Wlambda", "CKD-W", "CKD-WTa", "CKD-WTf")


def supports_temperature(name):
    return name in ("ST", "SnT", "ARWD", "ARWDY")


def make_forecaster(name, taus=None, seed=0, temperature="none"):
    """Instantiate the forecaster registered under ``name``."""
    if temperature != "none" and not supports_temperature(name):
        raise ConfigError(f"method {name} does not take a temperature mode")
    if name == "LD":
        return SeasonalWalk(DAY_CYCLE)
    if name == "LW":
        return SeasonalWalk(WEEK_CYCLE)
    if name == "LY":
        return SeasonalWalk(YEAR_CYCLE)
    if _sma_weeks(name):
        return SeasonalMovingAverage(_sma_weeks(name))
    if name == "SMA":
        return OptimalSeasonalMovingAverage()
    if name == "Empirical":
        return EmpiricalForecaster(taus=taus)
    if name in ("ST", "SnT"):
        return STForecaster(trend=name == "ST", temperature=temperature, taus=taus)
    if name in ("ARWD", "ARWDY"):
        return ARForecaster(name, temperature=temperature, taus=taus)
    if name == "HWT":
        return HWTForecaster(taus=taus, seed=seed)
    try:
        return KDEForecaster(canonical_method(name), taus=taus)
    except ValueError:
        raise ConfigError(f"unknown method {name!r}") from None


@dataclass(frozen=True)
class MethodSpec:
    name: str
    temperature: str = "none"

    def __post_init__(self):
        if self.temperature not in MODES:
            raise ConfigError(f"temperature mode must be one of {MODES}")

    @property
    def label(self):
        return self.name if self.temperature == "none" else f"{self.name}[{self.temperature}]"

    @property
    def uses_temperature(self):
        return self.temperature != "none" or self.name in ("CKD-WTa", "CKD-WTf")

    @property
    def actual_future(self):
        return self.temperature == "actual" or self.name == "CKD-WTa"

    @classmethod
    def parse(cls, text, default_mode="none"):
        text = text.strip()
        if ":" in text:
            name, mode = (s.strip() for s in text.split(":", 1))
        else:
            name, mode = text, default_mode if supports_temperature(text) else "none"
        return cls(name, mode)


# -- configuration ---------------------------------------------------------------

@dataclass
class EvalConfig:
    methods: list
    split: SplitSpec
    taus: np.ndarray = field(default_factory=lambda: DEFAULT_TAUS.copy())
    seed: int = 0
    output_dir: Path = None
    data_dir: Path = None
    write_forecasts: bool = True

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("at least one method is required")
        self.methods = [m if isinstance(m, MethodSpec) else MethodSpec.parse(m) for m in self.methods]
        for m in self.methods:
            make_forecaster(m.name, temperature=m.temperature)
        self.taus = np.asarray(self.taus, dtype=float)

    @classmethod
    def from_file(cls, path, start_date=None):
        """Parse a ``key = value`` file.

        ``train_end`` and ``test_start`` accept day counts (1-based days of
        the series) or ISO dates, which need ``start_date``.
        """
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        raw = {}
        for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            raw[k] = v
        return cls.from_mapping(raw, start_date, base=path.parent)

    @classmethod
    def from_mapping(cls, raw, start_date=None, base=None):
        known = {"methods", "train_end", "test_start", "test_days", "taus", "seed",
                 "temperature_mode", "output_dir", "data_dir", "write_forecasts"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("methods", "train_end", "test_days"):
            if key not in raw:
                raise ConfigError(f"missing config key {key!r}")
        mode = raw.get("temperature_mode", "none")
        methods = [MethodSpec.parse(m, mode) for m in raw["methods"].split(",") if m.strip()]
        train_day = _parse_day(raw["train_end"], start_date)
        n_test = int(raw["test_days"])
        if "test_start" in raw and _parse_day(raw["test_start"], start_date) != train_day + 1:
            raise ConfigError("test_start must be the day after train_end")
        split = SplitSpec.from_days(train_day, n_test)
        taus = _parse_taus(raw.get("taus", "percentiles"))
        base = Path(base or ".")
        out = Path(raw.get("output_dir", "out"))
        data = raw.get("data_dir")
        return cls(methods, split, taus, int(raw.get("seed", 0)),
                   out if out.is_absolute() else base / out,
                   None if data is None else (Path(data) if Path(data).is_absolute() else base / data),
                   raw.get("write_forecasts", "1") not in ("0", "false", "no"))


def _parse_day(text, start_date):
    text = text.strip()
    if text.lstrip("-").isdigit():
        return int(text)
    if start_date is None:
        raise ConfigError("date-valued split keys need the series start date")
    try:
        return (date.fromisoformat(text) - start_date).days + 1
    except ValueError:
        raise ConfigError(f"cannot parse day {text!r}") from None


def _parse_taus(text):
    if text.strip() in ("percentiles", "default"):
        return DEFAULT_TAUS.copy()
    try:
        return np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise ConfigError(f"cannot parse taus {text!r}") from None


# -- report --------------------------------------------------------------------

@dataclass
class ForecastRecord:
    """Actuals and forecasts of one method on one feeder over the test period."""

    origins: list = field(default_factory=list)
    actual: list = field(default_factory=list)
    mask: list = field(default_factory=list)
    point: list = field(default_factory=list)
    quantiles: list = field(default_factory=list)
    forecasts: list = field(default_factory=list)

    def arrays(self):
        return (np.array(self.actual), np.array(self.mask), np.array(self.point),
                np.array(self.quantiles))

    def errors(self):
        a, m, p, _ = self.arrays()
        return np.where(m, a - p, np.nan)


@dataclass
class ErrorReport:
    rows: list = field(default_factory=list)
    excluded: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    audit: list = field(default_factory=list)
    records: dict = field(default_factory=dict)

    def value(self, feeder, method, metric, slc="all"):
        for r in self.rows:
            if r[:4] == (feeder, method, metric, slc):
                return r[4]
        raise KeyError((feeder, method, metric, slc))

    def table(self, metric="MAPE", slc="all"):
        """``{(feeder, method): value}`` for one metric and slice."""
        return {(r[0], r[1]): r[4] for r in self.rows if r[2] == metric and r[3] == slc}

    def method_means(self, metric="MAPE", slc="all"):
        acc = {}
        for (_, m), v in self.table(metric, slc).items():
            acc.setdefault(m, []).append(v)
        return {m: float(np.mean(v)) for m, v in acc.items()}

    def leakage_violations(self):
        return [a for a in self.audit if a[3] > a[2] or a[4] > a[2]]

    def merge(self, other):
        self.rows.extend(other.rows)
        self.excluded.update(other.excluded)
        self.failures.extend(other.failures)
        self.audit.extend(other.audit)
        self.records.update(other.records)
        return self

    def write(self, out_dir):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if self.rows:
            write_report_csv(self, out_dir / "report.csv")
        with (out_dir / "excluded.csv").open("w", encoding="utf-8", newline="") as fh:
            fh.write("feeder,method,excluded\n")
            for (f, m), n in sorted(self.excluded.items()):
                fh.write(f"{f},{m},{n}\n")
        with (out_dir / "failures.csv").open("w", encoding="utf-8", newline="") as fh:
            fh.write("feeder,method,error\n")
            for f, m, msg in sorted(self.failures):
                fh.write(f"{f},{m},\"{msg.replace(chr(34), chr(39))}\"\n")


def _slice_index(slc):
    k = np.arange(1, N_HORIZONS + 1)
    if slc == "all":
        return np.ones(N_HORIZONS, bool)
    if slc.startswith("day"):
        d = int(slc[3:])
        return (k > (d - 1) * H) & (k <= d * H)
    return k == int(slc[4:])


def score_record(rec, taus, normalizer):
    """Scores for every slice; returns ``{(metric, slice): value}`` and the
    number of excluded (zero or masked actual) points."""
    a, m, p, q = rec.arrays()
    point_only = q.shape[-1] == 0
    if point_only:
        q = np.repeat(p[..., None], taus.size, axis=-1)
    ok = m & np.isfinite(a)
    nz = ok & (a != 0)
    crps = crps_from_quantiles(a, q, taus)
    pin = pinball(a[..., None], q, taus).mean(axis=-1)
    ape = np.abs(a - p) / np.where(a != 0, np.abs(a), 1.0)
    ae = np.abs(a - p)
    norm = normalizer.mean_hourly_load
    out = {}
    for slc in SLICES:
        cols = _slice_index(slc)
        sel_ok = ok[:, cols]
        sel_nz = nz[:, cols]
        if sel_nz.any():
            out[("MAPE", slc)] = 100.0 * float(ape[:, cols][sel_nz].mean())
        if sel_ok.any():
            out[("RMAE", slc)] = 100.0 * float(ae[:, cols][sel_ok].mean()) / norm
            out[("RCRPS", slc)] = 100.0 * float(crps[:, cols][sel_ok].mean()) / norm
            out[("PINBALL", slc)] = float(pin[:, cols][sel_ok].mean())
    return out, int(a.size - nz.sum())


# -- evaluation ----------------------------------------------------------------

@dataclass(frozen=True)
class FeederData:
    series: object
    temperature: object = None

    @property
    def feeder_id(self):
        return self.series.feeder_id


def _restrict_temps(temps, index, actual_future):
    return None if temps is None else temps.restrict(index, actual_future)


def _evaluate_method(feeder, spec, config):
    series, temps = feeder.series, feeder.temperature
    split = config.split
    if spec.uses_temperature and temps is None:
        raise ValueError(f"{spec.label} needs temperature data")
    if split.last_index > len(series):
        raise ValueError("series too short for the requested test period")
    model = make_forecaster(spec.name, config.taus, config.seed, spec.temperature)
    rec = ForecastRecord()
    audit = []
    if model.refit == "once":
        train = series.truncate(split.train_end)
        t_fit = _restrict_temps(temps, split.train_end, False) if spec.uses_temperature else None
        model.fit(train, t_fit)
    for origin in split.origins:
        hist = series.truncate(origin)
        t_in = _restrict_temps(temps, origin, spec.actual_future) if spec.uses_temperature else None
        if model.refit == "daily":
            model = clone(model).fit(hist, _restrict_temps(temps, origin, False)
                                     if spec.uses_temperature else None)
        fc = model.predict(hist, origin, t_in)
        info = 0
        if t_in is not None:
            if t_in.forecasts:
                info = origin_index((max(t_in.forecasts) - t_in.start.date()).days + 1)
            if not spec.actual_future:
                info = max(info, t_in.actual.size)
        audit.append((feeder.feeder_id, spec.label, origin, len(hist), info))
        times = fc.times
        rec.origins.append(origin)
        rec.actual.append(series.values[times - 1])
        rec.mask.append(series.mask[times - 1])
        rec.point.append(fc.point_forecast)
        rec.quantiles.append(fc.values)
        rec.forecasts.append(fc)
    return rec, audit


def run_rolling_evaluation(data, config, write=True):
    """Evaluate every configured method on every feeder.

    ``data`` is a :class:`FeederData` or an iterable of them.  A method
    failing on a feeder is recorded in ``failures`` and the run continues.
    """
    if isinstance(data, FeederData):
        data = [data]
    report = ErrorReport()
    for feeder in data:
        norm = ScoreNormalizer.from_series(feeder.series, config.split.train_end)
        for spec in config.methods:
            key = (feeder.feeder_id, spec.label)
            try:
                rec, audit = _evaluate_method(feeder, spec, config)
            except Exception as exc:  # isolate per feeder and method
                log.warning("%s on %s failed: %s", spec.label, feeder.feeder_id, exc)
                report.failures.append((feeder.feeder_id, spec.label, str(exc)))
                continue
            scores, excluded = score_record(rec, config.taus, norm)
            for (metric, slc), v in scores.items():
                report.rows.append((feeder.feeder_id, spec.label, metric, slc, v))
            report.excluded[key] = excluded
            report.audit.extend(audit)
            report.records[key] = rec
    report.rows.sort(key=lambda r: (r[0], r[1], METRICS.index(r[2]), SLICES.index(r[3])))
    if write and config.output_dir is not None:
        report.write(config.output_dir)
        if config.write_forecasts:
            fdir = Path(config.output_dir) / "forecasts"
            fdir.mkdir(parents=True, exist_ok=True)
            for (f, m), rec in sorted(report.records.items()):
                write_forecast_csv(rec.forecasts, fdir / f"{f}__{_safe(m)}.csv")
    return report


def _safe(label):
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in label)


# -- temperature sweep ---------------------------------------------------------

@dataclass
class SweepReport:
    scores: list = field(default_factory=list)       # feeder, method, mode, MAPE
    differences: list = field(default_factory=list)  # feeder, method, mode, MAPE(mode) - MAPE(none)
    ks: list = field(default_factory=list)           # feeder, method, pair, hour, D, p
    report: ErrorReport = None

    def rejection_rate(self, method=None, pair=("none", "actual"), alpha=0.05):
        cells = [r for r in self.ks if r[2] == pair and (method is None or r[1] == method)]
        if not cells:
            raise ValueError("no KS cells for the requested method and pair")
        return float(np.mean([r[5] < alpha for r in cells]))

    def mean_difference(self, method=None, mode="actual"):
        d = [r[3] for r in self.differences if r[2] == mode and (method is None or r[1] == method)]
        return float(np.mean(d))

    def write(self, out_dir):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with (out_dir / "sweep.csv").open("w", encoding="utf-8", newline="") as fh:
            fh.write("feeder,method,mode,mape,mape_minus_none\n")
            diff = {r[:3]: r[3] for r in self.differences}
            for f, m, mode, v in sorted(self.scores):
                fh.write(f"{f},{m},{mode},{fmt(v)},{fmt(diff.get((f, m, mode), 0.0))}\n")
        with (out_dir / "ks.csv").open("w", encoding="utf-8", newline="") as fh:
            fh.write("feeder,method,pair,hour,statistic,p_value\n")
            for f, m, pair, h, d, p in sorted(self.ks):
                fh.write(f"{f},{m},{pair[0]}-{pair[1]},{h},{fmt(d)},{fmt(p)}\n")


def _hourly_errors(rec):
    err = rec.errors()
    hours = hour_of_day(np.array(rec.origins)[:, None] + np.arange(1, N_HORIZONS + 1))
    return err.ravel(), hours.ravel()


def temperature_mode_sweep(data, config):
    """Run temperature-capable methods in every mode and compare errors.

    KS tests split errors by feeder and hour of day.
    """
    if isinstance(data, FeederData):
        data = [data]
    data = list(data)
    if any(f.temperature is None for f in data):
        raise ValueError("temperature sweep needs temperature data for every feeder")
    names = sorted({m.name for m in config.methods if supports_temperature(m.name)})
    if not names:
        raise ConfigError(f"no temperature-capable methods among {TEMPERATURE_METHODS}")
    specs = [MethodSpec(n, mode) for n in names for mode in MODES]
    cfg = EvalConfig(specs, config.split, config.taus, config.seed, None, None, False)
    report = run_rolling_evaluation(data, cfg, write=False)
    out = SweepReport(report=report)
    mape = report.table("MAPE")
    pairs = [("none", "forecast"), ("none", "actual"), ("forecast", "actual")]
    for feeder in data:
        fid = feeder.feeder_id
        for n in names:
            labels = {mode: MethodSpec(n, mode).label for mode in MODES}
            if any((fid, lab) not in mape for lab in labels.values()):
                continue
            for mode in MODES:
                out.scores.append((fid, n, mode, mape[(fid, labels[mode])]))
                out.differences.append((fid, n, mode, mape[(fid, labels[mode])] - mape[(fid, labels["none"])]))
            errs = {mode: _hourly_errors(report.records[(fid, labels[mode])]) for mode in MODES}
            for a, b in pairs:
                ea, ha = errs[a]
                eb, hb = errs[b]
                for h in range(1, H + 1):
                    x = ea[(ha == h) & np.isfinite(ea)]
                    y = eb[(hb == h) & np.isfinite(eb)]
                    d, p = ks_two_sample(x, y)
                    out.ks.append((fid, n, (a, b), h, d, p))
    return out


# -- scaling -------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingResult:
    fit: object
    fit_all: object
    outliers: tuple
    feeders: tuple


def scaling_analysis(errors, demands, threshold=2.0):
    """Power law of error against mean daily demand with outlier flags.

    ``errors`` and ``demands`` map feeder id to MAPE and mean daily demand.
    Feeders with an absolute log-residual above ``threshold`` residual
    standard deviations are flagged; ``fit`` is refitted without them.
    """
    feeders = tuple(sorted(errors))
    if len(feeders) < 3:
        raise ValueError("scaling analysis needs at least 3 feeders")
    x = np.array([demands[f] for f in feeders], dtype=float)
    y = np.array([errors[f] for f in feeders], dtype=float)
    fit_all = power_law_fit(x, y)
    sd = float(np.std(fit_all.residuals, ddof=1))
    flagged = np.abs(fit_all.residuals) > threshold * sd if sd > 0 else np.zeros(len(feeders), bool)
    keep = ~flagged
    fit = power_law_fit(x[keep], y[keep]) if keep.sum() >= 3 and flagged.any() else fit_all
    return ScalingResult(fit, fit_all, tuple(f for f, o in zip(feeders, flagged) if o), feeders)


def mean_daily_demand(series, train_end):
    vals = series.values[:train_end][series.mask[:train_end]]
    return float(vals.mean() * H)
