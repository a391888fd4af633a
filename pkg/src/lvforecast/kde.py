"""Kernel density forecasts.

KDE-W and KDE-Wlambda place a Gaussian kernel on every training observation
sharing the target's week period, with uniform or seasonally decaying
weights.  The conditional variants (CKD-W, CKD-WTa, CKD-WTf) weight every
observation of the final training year by kernel similarity in week period
and, optionally, temperature.  Loads and temperatures are min-max
normalised on the training data before bandwidths are chosen.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .base import BaseForecaster, check_origin, check_series, check_taus, horizon_times
from .core import (H, WEEK, MinMaxScale, QuantileForecast, SplitSpec, TemperatureData,
                   day_index, period_of_week, week_of_year)
from .metrics import pinball
from .optimize import bounded_nelder_mead, bounded_scalar

METHODS = ("KDE-W", "KDE-Wlambda", "CKD-W", "CKD-WTa", "CKD-WTf")
ALIASES = {"KDE-Wλ": "KDE-Wlambda", "KDE-WL": "KDE-Wlambda"}
PARAM_NAMES = {
    "KDE-W": ("h_load",),
    "KDE-Wlambda": ("h_load", "lam"),
    "CKD-W": ("h_load", "h_week"),
    "CKD-WTa": ("h_load", "h_week", "h_temp"),
    "CKD-WTf": ("h_load", "h_week", "h_temp"),
}
PARAM_LOWER = 1e-4
PARAM_START = 0.1
WEIGHT_CUTOFF = 1e-16
CKD_HISTORY_DAYS = 365
_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class NarrowConditioningError(ValueError):
    """Every kernel weight underflowed for a conditioning target."""


def canonical_method(method):
    method = ALIASES.get(method, method)
    if method not in METHODS:
        raise ValueError(f"unknown KDE method {method!r}; expected one of {METHODS}")
    return method


@dataclass(frozen=True)
class KdeParams:
    h_load: float
    lam: float = None
    h_week: float = None
    h_temp: float = None

    def __post_init__(self):
        for name in ("h_load", "h_week", "h_temp"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.lam is not None and not 0 < self.lam <= 1:
            raise ValueError("lam must lie in (0, 1]")

    @classmethod
    def from_vector(cls, method, x):
        return cls(**dict(zip(PARAM_NAMES[canonical_method(method)], map(float, np.atleast_1d(x)))))

    def as_dict(self):
        return {k: v for k, v in vars(self).items() if v is not None}


@dataclass(frozen=True)
class KdeTrainWindow:
    t1: int
    t2: int

    def __post_init__(self):
        if self.t1 % H != 1 or self.t2 % H != 0 or self.t2 < self.t1:
            raise ValueError("training window must cover whole days (t1 mod 24 = 1, t2 mod 24 = 0)")

    @property
    def times(self):
        return np.arange(self.t1, self.t2 + 1)


def gaussian_kernel(u):
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) * _INV_SQRT2PI


def decay_exponent(week_t, week_i):
    """Annual-periodic distance between week-of-year numbers (1..52)."""
    week_t = np.asarray(week_t)
    week_i = np.asarray(week_i)
    if np.any((week_t < 1) | (week_t > 52)) or np.any((week_i < 1) | (week_i > 52)):
        raise ValueError("week numbers must lie in 1..52")
    gap = np.abs(week_t - week_i)
    return np.minimum(gap, 52 - gap)


def week_numbers(series, times):
    """Week-of-year of each time index, computed once per distinct day."""
    days = day_index(np.asarray(times))
    uniq, inv = np.unique(days, return_inverse=True)
    weeks = np.array([week_of_year(series.date_of((d - 1) * H + 1)) for d in uniq])
    return weeks[inv].reshape(np.shape(times))


def kde_weights(method, t, window, params, series):
    """Weights over the same-week-period observed times in ``window``.

    Returns ``(times, weights)``; KDE-W weights are ones, KDE-Wlambda
    weights are normalised decay weights.
    """
    method = canonical_method(method)
    times = window.times
    times = times[(period_of_week(times) == period_of_week(t)) & series.mask[times - 1]]
    if times.size == 0:
        raise ValueError("no same-week-period history")
    if method == "KDE-W":
        return times, np.ones(times.size)
    if method != "KDE-Wlambda":
        raise ValueError("kde_weights covers KDE-W and KDE-Wlambda")
    alpha = decay_exponent(week_numbers(series, t), week_numbers(series, times))
    w = params.lam ** alpha.astype(float)
    return times, w / w.sum()


@numba.njit(cache=True)
def _mixture_quantiles(obs, w, h, taus, tol):
    n = obs.size
    lo0 = obs.min() - 6.0 * h
    hi0 = obs.max() + 6.0 * h
    out = np.empty(taus.size)
    x = 0.0
    for i in range(n):
        x += w[i] * obs[i]
    prev = lo0
    for j in range(taus.size):
        tau = taus[j]
        lo = prev
        hi = hi0
        if x < lo or x > hi:
            x = 0.5 * (lo + hi)
        for _ in range(200):
            F = 0.0
            f = 0.0
            for i in range(n):
                z = (x - obs[i]) / h
                F += w[i] * 0.5 * math.erfc(-z / _SQRT2)
                f += w[i] * math.exp(-0.5 * z * z)
            f *= _INV_SQRT2PI / h
            g = F - tau
            if g > 0:
                hi = x
            else:
                lo = x
            if abs(g) < 1e-13 or hi - lo < tol:
                break
            xn = x - g / f if f > 0 else 0.5 * (lo + hi)
            if not (lo < xn < hi):
                xn = 0.5 * (lo + hi)
            x = xn
        out[j] = x
        prev = x
    return out


def _prune(obs, weights):
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0 or np.any(w < 0):
        raise ValueError("weights must be non-negative and not all zero")
    keep = w > WEIGHT_CUTOFF * w.max()
    return np.ascontiguousarray(obs[keep], dtype=float), np.ascontiguousarray(w[keep] / w[keep].sum())


def mixture_cdf(x, obs, weights, h):
    """Weighted Gaussian-mixture CDF at the points ``x``."""
    from scipy.special import ndtr
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    z = (np.asarray(x, dtype=float)[..., None] - np.asarray(obs, dtype=float)) / h
    return ndtr(z) @ w


def kde_quantiles(obs, weights, h_load, taus):
    """Invert the weighted Gaussian-mixture CDF at each tau."""
    obs = np.asarray(obs, dtype=float).ravel()
    if obs.size == 0:
        raise ValueError("no observations")
    if not h_load > 0:
        raise ValueError("bandwidth must be positive")
    o, w = _prune(obs, weights)
    taus = np.ascontiguousarray(taus, dtype=float)
    return _mixture_quantiles(o, w, float(h_load), taus, 1e-10 * h_load)


def _week_distance(a, b, circular):
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if circular:
        d = np.abs(d)
        d = np.minimum(d, WEEK - d)
    return d


def ckd_weights(obs_pw, y, params, obs_z=None, z=None, circular=False):
    """Product-kernel weights over all training times for target week period
    ``y`` and (normalised) temperature ``z``."""
    logw = -0.5 * (_week_distance(obs_pw, y, circular) / params.h_week) ** 2
    if obs_z is not None:
        if z is None or not np.isfinite(z):
            raise ValueError("conditioning temperature missing")
        logw = logw - 0.5 * ((np.asarray(obs_z) - z) / params.h_temp) ** 2
    n_kernels = 1 if obs_z is None else 2
    mass = np.sum(np.exp(logw)) * _INV_SQRT2PI ** n_kernels
    if mass < 1e-300:
        raise NarrowConditioningError("conditioning too narrow: total kernel mass below 1e-300")
    return np.exp(logw - logw.max())


def ckd_quantiles(obs, obs_pw, y, params, taus, obs_z=None, z=None, circular=False):
    w = ckd_weights(obs_pw, y, params, obs_z, z, circular)
    return kde_quantiles(obs, w, params.h_load, taus)


# -- fitted model --------------------------------------------------------------

@dataclass(frozen=True)
class KdeModel:
    """Training data (normalised) and parameters needed to forecast."""

    method: str
    params: KdeParams
    window: KdeTrainWindow
    load_scale: MinMaxScale
    temp_scale: MinMaxScale
    obs_times: np.ndarray
    obs: np.ndarray
    obs_weeks: np.ndarray
    obs_z: np.ndarray
    circular: bool = False

    def quantiles(self, target_times, target_weeks, taus, target_z=None):
        """Normalised quantile matrix for the given targets."""
        method = self.method
        out = np.empty((len(target_times), len(taus)))
        pw_obs = period_of_week(self.obs_times)
        pw_tgt = period_of_week(np.asarray(target_times))
        cache = {}
        for i, (pw, wk) in enumerate(zip(pw_tgt, target_weeks)):
            if method in ("KDE-W", "CKD-W"):
                key = (pw,)
            elif method == "KDE-Wlambda":
                key = (pw, wk)
            else:
                key = None
            if key is not None and key in cache:
                out[i] = cache[key]
                continue
            if method in ("KDE-W", "KDE-Wlambda"):
                sel = pw_obs == pw
                if not sel.any():
                    raise ValueError("no same-week-period history")
                if method == "KDE-W":
                    w = np.ones(int(sel.sum()))
                else:
                    w = self.params.lam ** decay_exponent(wk, self.obs_weeks[sel]).astype(float)
                q = kde_quantiles(self.obs[sel], w, self.params.h_load, taus)
            elif method == "CKD-W":
                q = ckd_quantiles(self.obs, pw_obs, pw, self.params, taus, circular=self.circular)
            else:
                q = ckd_quantiles(self.obs, pw_obs, pw, self.params, taus, self.obs_z,
                                  target_z[i], self.circular)
            out[i] = q
            if key is not None:
                cache[key] = q
        return out


def _window_for(method, train_end, history_days=CKD_HISTORY_DAYS):
    if method.startswith("CKD"):
        t1 = max(1, train_end - history_days * H + 1)
    else:
        t1 = 1
    return KdeTrainWindow(t1, train_end)


def build_model(method, series, train_end, params=None, temperature=None, circular=False,
                load_scale=None, temp_scale=None):
    """Collect the training observations of ``method`` up to ``train_end``."""
    method = canonical_method(method)
    series = check_series(series)
    window = _window_for(method, train_end)
    times = window.times
    times = times[series.mask[times - 1]]
    if times.size == 0:
        raise ValueError("no observed training data")
    raw = series.values[times - 1]
    load_scale = load_scale or MinMaxScale.from_data(raw)
    obs_z = None
    if method in ("CKD-WTa", "CKD-WTf"):
        if not isinstance(temperature, TemperatureData):
            raise ValueError(f"{method} requires temperature data")
        temps = np.asarray(temperature.actual_at(times), dtype=float)
        temp_scale = temp_scale or MinMaxScale.from_data(temps)
        obs_z = temp_scale.normalize(temps)
    weeks = week_numbers(series, times) if method == "KDE-Wlambda" else None
    return KdeModel(method, params, window, load_scale, temp_scale, times,
                    load_scale.normalize(raw), weeks, obs_z, circular)


def _target_temperature(model, temperature, times, origin=None):
    if model.obs_z is None:
        return None
    if model.method == "CKD-WTf" and origin is not None:
        day = (origin - 8) // H + 1
        z = np.asarray(temperature.vintage(day), dtype=float)[: len(times)]
    else:
        z = np.asarray(temperature.actual_at(times), dtype=float)
    return model.temp_scale.normalize(z)


def validation_objective(model, times, actual_norm, taus, target_z=None, weeks=None):
    weeks = np.zeros(len(times), dtype=int) if weeks is None else weeks
    q = model.quantiles(times, weeks, taus, target_z)
    return float(np.mean(pinball(actual_norm[:, None], q, taus)))


def optimize_kde_params(method, series, split, temperature=None, taus=None, circular=False,
                        return_result=False):
    """Choose parameters on the validation window before the test period."""
    method = canonical_method(method)
    series = check_series(series)
    taus = check_taus(taus)
    if not isinstance(split, SplitSpec):
        raise TypeError("split must be a SplitSpec")
    val_len = split.validation_weeks * WEEK
    val_end = split.train_end
    val_start = val_end - val_len + 1
    if val_start - 1 < WEEK or series.mask[: val_start - 1].sum() < WEEK:
        raise ValueError("not enough observed history before the validation window")
    # normalise with the full training range so the chosen bandwidths carry over
    train_vals = series.values[: split.train_end][series.mask[: split.train_end]]
    load_scale = MinMaxScale.from_data(train_vals)
    temp_scale = None
    if method in ("CKD-WTa", "CKD-WTf"):
        if not isinstance(temperature, TemperatureData):
            raise ValueError(f"{method} requires temperature data")
        temp_scale = MinMaxScale.from_data(temperature.actual_at(np.arange(1, split.train_end + 1)))
    base = build_model(method, series, val_start - 1, None, temperature, circular,
                       load_scale, temp_scale)
    vt = np.arange(val_start, val_end + 1)
    vt = vt[series.mask[vt - 1]]
    actual = load_scale.normalize(series.values[vt - 1])
    weeks = week_numbers(series, vt) if method == "KDE-Wlambda" else None
    target_z = None
    if temp_scale is not None:
        if method == "CKD-WTf":
            z = temperature.forecast_or_actual(vt, 1)
        else:
            z = np.asarray(temperature.actual_at(vt), dtype=float)
        target_z = temp_scale.normalize(z)

    def objective(x):
        model = _replace_params(base, KdeParams.from_vector(method, x))
        try:
            return validation_objective(model, vt, actual, taus, target_z, weeks)
        except NarrowConditioningError:
            # too-narrow bandwidths are infeasible, not fatal, during the search
            return np.inf

    dim = len(PARAM_NAMES[method])
    start = np.full(dim, PARAM_START)
    if dim == 1:
        res = bounded_scalar(objective, (PARAM_LOWER, 1.0), xatol=1e-4)
    else:
        res = bounded_nelder_mead(objective, start, [(PARAM_LOWER, 1.0)] * dim,
                                  tol=1e-4, maxiter=200)
    if not np.isfinite(res.fun):
        raise ValueError("non-finite validation objective")
    params = KdeParams.from_vector(method, np.atleast_1d(res.x))
    if return_result:
        return params, res
    return params


def _replace_params(model, params):
    from dataclasses import replace
    return replace(model, params=params)


def forecast_kde(model, series, origin, taus, temperature=None):
    """Quantile forecast for horizons 1..96 from a fitted :class:`KdeModel`."""
    origin = check_origin(series, origin)
    times = horizon_times(origin)
    weeks = week_numbers(series, times) if model.method == "KDE-Wlambda" else np.zeros(times.size, int)
    if model.method == "CKD-WTf":
        if temperature is None:
            raise ValueError("CKD-WTf requires a temperature forecast vintage")
        try:
            z = _target_temperature(model, temperature, times, origin)
        except KeyError as exc:
            raise ValueError(f"missing temperature vintage: {exc}") from None
    elif model.method == "CKD-WTa":
        if temperature is None:
            raise ValueError("CKD-WTa requires actual temperatures")
        z = _target_temperature(model, temperature, times)
    else:
        z = None
    q = model.quantiles(times, weeks, taus, z)
    values = model.load_scale.denormalize(q)
    return QuantileForecast(origin, taus, np.maximum.accumulate(values, axis=1))


class KDEForecaster(BaseForecaster):
    """KDE/CKD forecaster with parameters chosen on a validation window.

    Passing ``params`` skips the validation search.
    """

    def __init__(self, method="KDE-W", taus=None, params=None, validation_weeks=2,
                 circular=False):
        self.method = method
        self.taus = taus
        self.params = params
        self.validation_weeks = validation_weeks
        self.circular = circular

    @property
    def supports_temperature(self):
        return canonical_method(self.method) in ("CKD-WTa", "CKD-WTf")

    def fit(self, series, temperature=None):
        series = check_series(series)
        method = canonical_method(self.method)
        self.taus_ = check_taus(self.taus)
        train_end = len(series) - len(series) % H
        if self.params is None:
            split = SplitSpec(train_end, (train_end // H + 1,), self.validation_weeks)
            self.params_ = optimize_kde_params(method, series, split, temperature, self.taus_,
                                               self.circular)
        else:
            self.params_ = self.params
        self.model_ = build_model(method, series, train_end, self.params_, temperature,
                                  self.circular)
        return self

    def predict(self, series, origin, temperature=None):
        self._check_fitted()
        return forecast_kde(self.model_, series, origin, self.taus_, temperature)
