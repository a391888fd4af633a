"""Holt-Winters-Taylor double-seasonal exponential smoothing.

State: level ``l``, intraday indexes ``d[24]``, intraweek indexes ``w[168]``
and the last error ``e``.  Seasonal updates act on the slot used in the
prediction.  Forecast densities come from a bootstrap ensemble of
simulated paths.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.optimize import minimize

from .base import BaseForecaster, check_origin, check_series, check_taus
from .core import H, N_HORIZONS, WEEK, QuantileForecast, hour_of_day, period_of_week

BURN_IN = 4 * WEEK
START = (0.1, 0.1, 0.1, 0.3)
BOUNDS = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 0.99))


@dataclass(frozen=True)
class HwtParams:
    lam: float
    delta: float
    omega: float
    phi: float

    def __post_init__(self):
        for name in ("lam", "delta", "omega"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 <= self.phi < 1.0:
            raise ValueError(f"phi must lie in [0, 1), got {self.phi}")

    def as_array(self):
        return np.array([self.lam, self.delta, self.omega, self.phi])


@dataclass(frozen=True)
class HwtState:
    level: float
    d: np.ndarray
    w: np.ndarray
    e: float
    t: int = 0  # last time index absorbed

    def __post_init__(self):
        if not (np.isfinite(self.level) and np.isfinite(self.e)
                and np.all(np.isfinite(self.d)) and np.all(np.isfinite(self.w))):
            raise ValueError("HWT state must be finite")
        if self.d.shape != (H,) or self.w.shape != (WEEK,):
            raise ValueError("seasonal index vectors must have lengths 24 and 168")


def hwt_init(series):
    """Initial decomposition from the first four weeks."""
    series = check_series(series)
    if len(series) < BURN_IN:
        raise ValueError("HWT initialisation needs at least 4 weeks of data")
    t = np.arange(1, BURN_IN + 1)
    ok = series.mask[:BURN_IN]
    t, y = t[ok], series.values[:BURN_IN][ok]
    level = float(y.mean())
    pw = period_of_week(t) - 1
    cnt = np.bincount(pw, minlength=WEEK)
    if np.any(cnt == 0):
        raise ValueError("every week period needs an observation in the first 4 weeks")
    w = np.bincount(pw, weights=y, minlength=WEEK) / cnt - level
    hod = hour_of_day(t) - 1
    h_mean = np.bincount(hod, weights=y, minlength=H) / np.bincount(hod, minlength=H)
    w_by_hour = w.reshape(7, H).mean(axis=0)
    d = h_mean - level - w_by_hour
    return HwtState(level, d, w, 0.0, 0)


@numba.njit(cache=True)
def _filter_kernel(y, ok, t0, lam, delta, omega, phi, level, d, w, e):
    n = y.size
    errors = np.empty(n)
    onestep = np.full(n, np.nan)
    for i in range(n):
        t = t0 + i
        hs = (t - 1) % 24
        ws = (t - 1) % 168
        if not ok[i]:
            e = phi * e
            errors[i] = e
            continue
        base = level + d[hs] + w[ws]
        e_new = y[i] - base
        onestep[i] = e_new - phi * e
        level += lam * e_new
        d[hs] += delta * e_new
        w[ws] += omega * e_new
        e = e_new
        errors[i] = e
    return level, e, errors, onestep


def hwt_filter(series, params, init=None, t_end=None):
    """Run the update equations over ``series`` up to ``t_end``.

    Returns the final :class:`HwtState`, the errors ``e_t`` and the
    one-step prediction errors ``e_t - phi e_{t-1}`` (NaN at masked points).
    """
    series = check_series(series)
    init = hwt_init(series) if init is None else init
    t_end = len(series) if t_end is None else int(t_end)
    lo = init.t
    y = np.ascontiguousarray(series.values[lo:t_end])
    ok = np.ascontiguousarray(series.mask[lo:t_end])
    d = init.d.astype(float).copy()
    w = init.w.astype(float).copy()
    level, e, errors, onestep = _filter_kernel(
        y, ok, lo + 1, float(params.lam), float(params.delta), float(params.omega),
        float(params.phi), float(init.level), d, w, float(init.e))
    return HwtState(float(level), d, w, float(e), t_end), errors, onestep


def hwt_sse(series, params, init=None, burn_in=BURN_IN):
    _, _, onestep = hwt_filter(series, params, init)
    tail = onestep[burn_in:]
    return float(np.nansum(tail ** 2))


@dataclass(frozen=True)
class HwtFit:
    params: HwtParams
    objective: float
    start_objective: float
    n_iter: int


def hwt_estimate(series, tol=1e-5, maxiter=500, return_fit=False):
    """Minimise the one-step SSE after the burn-in by bounded Nelder-Mead."""
    series = check_series(series)
    if len(series) < 2 * BURN_IN:
        raise ValueError("HWT estimation needs at least 8 weeks of history")
    init = hwt_init(series)
    y = np.ascontiguousarray(series.values)
    ok = np.ascontiguousarray(series.mask)

    def objective(x):
        x = np.clip(x, [b[0] for b in BOUNDS], [b[1] for b in BOUNDS])
        _, _, _, onestep = _filter_kernel(y, ok, 1, x[0], x[1], x[2], x[3], init.level,
                                          init.d.copy(), init.w.copy(), 0.0)
        return float(np.nansum(onestep[BURN_IN:] ** 2))

    start_obj = objective(np.array(START))
    if not np.isfinite(start_obj):
        raise ValueError("non-finite HWT objective at the start point")
    res = minimize(objective, np.array(START), method="Nelder-Mead", bounds=BOUNDS,
                   options={"xatol": tol, "fatol": tol, "maxiter": maxiter})
    if not np.isfinite(res.fun):
        raise ValueError("non-finite HWT objective")
    x = np.clip(res.x, [b[0] for b in BOUNDS], [b[1] for b in BOUNDS])
    params = HwtParams(*(float(v) for v in x))
    if return_fit:
        return HwtFit(params, float(res.fun), start_obj, int(res.nit))
    return params


def simulate_paths(state, params, origin, innovations):
    """Iterate the state equations from ``state`` with the given innovation
    matrix (paths x steps); returns simulated loads of the same shape."""
    n_paths, steps = innovations.shape
    level = np.full(n_paths, state.level)
    d = np.tile(state.d, (n_paths, 1))
    w = np.tile(state.w, (n_paths, 1))
    e = np.full(n_paths, state.e)
    rows = np.arange(n_paths)
    out = np.empty((n_paths, steps))
    for k in range(steps):
        t = origin + k + 1
        hs, ws = (t - 1) % H, (t - 1) % WEEK
        e = params.phi * e + innovations[:, k]
        out[:, k] = level + d[rows, hs] + w[rows, ws] + e
        level = level + params.lam * e
        d[:, hs] += params.delta * e
        w[:, ws] += params.omega * e
    return out


def residual_pool(onestep, burn_in=BURN_IN):
    pool = onestep[burn_in:]
    pool = pool[np.isfinite(pool)]
    if pool.size == 0:
        raise ValueError("no post-burn-in one-step errors to resample")
    return pool


def hwt_forecast(series, params, origin, taus=None, n_paths=1000, seed=0,
                 noise="bootstrap", pool=None, n_horizons=N_HORIZONS):
    """Ensemble density forecast from the filtered state at ``origin``.

    ``pool`` defaults to the post-burn-in one-step errors of the filter run.
    All paths draw from one generator seeded with ``seed``.
    """
    series = check_series(series)
    taus = check_taus(taus)
    origin = check_origin(series, origin)
    state, _, onestep = hwt_filter(series, params, t_end=origin)
    if pool is None:
        pool = residual_pool(onestep)
    rng = np.random.default_rng(seed)
    if noise == "bootstrap":
        eps = rng.choice(np.asarray(pool, dtype=float), size=(n_paths, n_horizons), replace=True)
    elif noise == "gaussian":
        eps = rng.normal(0.0, float(np.std(pool)), size=(n_paths, n_horizons))
    else:
        raise ValueError("noise must be 'bootstrap' or 'gaussian'")
    paths = simulate_paths(state, params, origin, eps)
    values = np.quantile(paths, taus, axis=0).T
    values = np.maximum.accumulate(values, axis=1)
    return QuantileForecast(origin, taus, values, point=np.median(paths, axis=0))


def hwt_deterministic(series, params, origin, n_horizons=N_HORIZONS):
    """Noise-free path from the filtered state at ``origin``."""
    state, _, _ = hwt_filter(series, params, t_end=origin)
    return simulate_paths(state, params, origin, np.zeros((1, n_horizons)))[0]


class HWTForecaster(BaseForecaster):
    """Double-seasonal Holt-Winters-Taylor with an AR(1) error term."""

    def __init__(self, taus=None, n_paths=1000, seed=0, noise="bootstrap"):
        self.taus = taus
        self.n_paths = n_paths
        self.seed = seed
        self.noise = noise

    def fit(self, series, temperature=None):
        series = check_series(series)
        self.params_ = hwt_estimate(series)
        _, _, onestep = hwt_filter(series, self.params_)
        self.pool_ = residual_pool(onestep)
        self.taus_ = check_taus(self.taus)
        return self

    def predict(self, series, origin, temperature=None):
        self._check_fitted()
        return hwt_forecast(series, self.params_, origin, self.taus_, self.n_paths,
                            self.seed + int(origin), self.noise, pool=self.pool_)
