"""Quantile seasonal regression (ST with a linear trend, SnT without).

Each quantile is a linear model with per-hour trend and annual Fourier
terms, 168 week-period dummies and optional cubic temperature terms, fitted
by minimising the pinball loss as a linear program.
"""
from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from sklearn.utils.validation import check_array

from .base import (BaseForecaster, check_origin, check_series, check_taus,
                   check_temperature, horizon_times)
from .core import H, N_HORIZONS, WEEK, QuantileForecast, day_index, hour_of_day, period_of_week, rearrange

MIN_HISTORY = 8 * WEEK
YEAR_DAYS = 365.0


@dataclass(frozen=True)
class StDesignSpec:
    P: int = 3
    trend: bool = True
    temperature: str = "none"
    taus: np.ndarray = None

    def __post_init__(self):
        if self.P not in (2, 3):
            raise ValueError("P must be 2 or 3")
        if self.temperature not in ("none", "actual", "forecast"):
            raise ValueError("temperature must be none, actual or forecast")
        object.__setattr__(self, "taus", check_taus(self.taus))

    @property
    def n_trend(self):
        return H if self.trend else 0

    @property
    def width(self):
        return self.n_trend + H * 2 * self.P + WEEK + (3 if self.temperature != "none" else 0)

    def hour_columns(self, k):
        """Design columns that are non-zero only for hour-of-day ``k``."""
        cols = []
        if self.trend:
            cols.append(k - 1)
        off = self.n_trend + (k - 1) * 2 * self.P
        cols.extend(range(off, off + 2 * self.P))
        off = self.n_trend + H * 2 * self.P
        cols.extend(off + k - 1 + H * np.arange(7))
        return np.array(cols)


def build_st_design(times, spec, temps=None, centre=0.0):
    """Design rows for ``times``; ``centre`` shifts the day counter."""
    times = np.atleast_1d(np.asarray(times, dtype=np.int64))
    n = times.size
    if (spec.temperature != "none") != (temps is not None):
        raise ValueError("temperature values are required iff the spec uses temperature")
    X = np.zeros((n, spec.width))
    rows = np.arange(n)
    hod = hour_of_day(times) - 1
    eta = day_index(times) - centre
    if spec.trend:
        X[rows, hod] = eta
    off = spec.n_trend
    for p in range(1, spec.P + 1):
        ang = 2 * np.pi * p * eta / YEAR_DAYS
        X[rows, off + hod * 2 * spec.P + 2 * (p - 1)] = np.sin(ang)
        X[rows, off + hod * 2 * spec.P + 2 * (p - 1) + 1] = np.cos(ang)
    off += H * 2 * spec.P
    X[rows, off + period_of_week(times) - 1] = 1.0
    if temps is not None:
        T = np.atleast_1d(np.asarray(temps, dtype=float))
        if T.shape != times.shape or not np.all(np.isfinite(T)):
            raise ValueError("missing temperature for a requested time")
        X[:, -3], X[:, -2], X[:, -1] = T, T ** 2, T ** 3
    return X


def pinball_objective(X, y, beta, tau):
    u = y - X @ beta
    return float(np.sum(np.where(u >= 0, tau * u, (tau - 1) * u)))


def _face_directions(X, a, tol):
    """Null-space basis of the rows whose dual value is strictly interior.

    Those rows have zero residual at every optimum, so optimal coefficients
    differ only along these directions.
    """
    interior = (a > tol) & (a < 1 - tol)
    p = X.shape[1]
    if not interior.any():
        return np.eye(p), interior
    _, sv, vt = np.linalg.svd(X[interior], full_matrices=True)
    rank = int(np.sum(sv > 1e-10 * sv[0])) if sv.size else 0
    return vt[rank:].T, interior


def _min_norm_face(X, y, a, beta0, N, interior, tol):
    """Minimum-norm coefficients ``beta0 + N z`` on the optimal face.

    Rows with ``a = 1`` must keep a non-negative residual and rows with
    ``a = 0`` a non-positive one.
    """
    r0 = y - X @ beta0
    XN = X @ N
    upper = ~interior & (a >= 1 - tol)
    lower = ~interior & (a <= tol)
    slack = 1e-9 * (1.0 + np.abs(y).max())
    # constraints written as G z <= h
    G = np.vstack([XN[upper], -XN[lower]])
    h = np.concatenate([r0[upper], -r0[lower]]) + slack
    d = N.shape[1]
    if d == 1:
        g = G[:, 0]
        # exact face first; the slack only rescues a numerically empty interval
        for hh in (h - slack, h):
            lo = np.max(hh[g < 0] / g[g < 0], initial=-np.inf)
            hi = np.min(hh[g > 0] / g[g > 0], initial=np.inf)
            if lo <= hi:
                break
        else:
            return beta0
        z = np.clip(-(N[:, 0] @ beta0), lo, hi)
        return beta0 + N[:, 0] * z
    z = cp.Variable(d)
    prob = cp.Problem(cp.Minimize(cp.sum_squares(beta0 + N @ z)), [G @ z <= h])
    prob.solve(solver=cp.CLARABEL)
    if z.value is None:
        raise ValueError(f"tie-breaking QP failed ({prob.status})")
    return beta0 + N @ np.asarray(z.value, dtype=float)


def fit_pinball(X, y, tau):
    """Quantile-regression coefficients minimising the pinball loss.

    Solves the dual LP ``max y'a  s.t.  X'a = (1 - tau) X'1, 0 <= a <= 1``;
    the coefficients are the equality multipliers.  When the optimum is not
    unique the minimum-Euclidean-norm optimal coefficient vector is returned.
    """
    X = check_array(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if y.size != n:
        raise ValueError("X and y have inconsistent lengths")
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    A = sp.csr_matrix(X.T)
    b_eq = (1 - tau) * X.sum(axis=0)
    res = linprog(-y, A_eq=A, b_eq=b_eq, bounds=(0, 1), method="highs")
    if res.status != 0:
        raise ValueError(f"quantile regression LP failed: {res.message}")
    a = res.x
    beta = -np.asarray(res.eqlin.marginals, dtype=float)
    a_tol = 1e-9
    N, interior = _face_directions(X, a, a_tol)
    if N.shape[1]:
        cand = _min_norm_face(X, y, a, beta, N, interior, a_tol)
        base = pinball_objective(X, y, beta, tau)
        if pinball_objective(X, y, cand, tau) <= base + 1e-9 * max(1.0, abs(base)):
            beta = cand
    return beta


@dataclass(frozen=True)
class StModel:
    spec: StDesignSpec
    coefs: np.ndarray  # variants x taus x width
    centre: float
    train_end: int

    @property
    def taus(self):
        return self.spec.taus

    def variant_of_horizon(self, k):
        if self.coefs.shape[0] == 1:
            return 0
        return (np.asarray(k) - 1) // H


def _training_temps(temps, times, mode, bucket):
    if mode == "actual":
        return np.asarray(temps.actual_at(times), dtype=float)
    return temps.forecast_or_actual(times, bucket)


def _fit_by_hour(X, y, times, spec, tau):
    beta = np.zeros(spec.width)
    hod = hour_of_day(times)
    for k in range(1, H + 1):
        rows = hod == k
        cols = spec.hour_columns(k)
        Xk = X[np.ix_(rows, cols)]
        live = np.any(Xk != 0, axis=0)
        beta[cols[live]] = fit_pinball(Xk[:, live], y[rows], tau)
    return beta


def fit_st(series, spec, train_end=None, temperature=None):
    """One pinball fit per tau on all observed history up to ``train_end``.

    With temperature, four models are fitted, one per day-ahead bucket, each
    using the temperature input available at that distance.
    """
    series = check_series(series)
    train_end = len(series) if train_end is None else int(train_end)
    if train_end < MIN_HISTORY:
        raise ValueError("ST needs at least 8 weeks of history")
    temps = check_temperature(temperature, spec.temperature)
    times = np.arange(1, train_end + 1)
    obs = series.mask[times - 1]
    y_all = series.values[times - 1]
    centre = (1 + day_index(train_end)) / 2.0
    buckets = [1] if spec.temperature in ("none", "actual") else [1, 2, 3, 4]
    coefs = np.zeros((len(buckets), spec.taus.size, spec.width))
    for v, bucket in enumerate(buckets):
        T = None
        ok = obs.copy()
        if temps is not None:
            T = _training_temps(temps, times, spec.temperature, bucket)
            ok &= np.isfinite(T)
            T = T[ok]
        t_fit = times[ok]
        X = build_st_design(t_fit, spec, T, centre)
        y = y_all[ok]
        for j, tau in enumerate(spec.taus):
            if temps is None:
                coefs[v, j] = _fit_by_hour(X, y, t_fit, spec, tau)
            else:
                coefs[v, j] = fit_pinball(X, y, tau)
    return StModel(spec, coefs, centre, train_end)


def predict_st(model, times, temps=None, variant=None):
    """Quantile rows for ``times``; ``variant`` selects a day-ahead model
    (one per row or a scalar)."""
    times = np.atleast_1d(np.asarray(times, dtype=np.int64))
    X = build_st_design(times, model.spec, temps, model.centre)
    v = np.zeros(times.size, dtype=int) if variant is None else np.broadcast_to(variant, times.shape)
    out = np.einsum("np,ntp->nt", X, model.coefs[v])
    return rearrange(out)


def forecast_st(model, series, origin, temperature=None):
    origin = check_origin(series, origin)
    times = horizon_times(origin)
    temps = None
    if model.spec.temperature == "actual":
        temps = np.asarray(temperature.actual_at(times), dtype=float)
    elif model.spec.temperature == "forecast":
        try:
            temps = np.asarray(temperature.vintage((origin - 8) // H + 1), dtype=float)
        except KeyError as exc:
            raise ValueError(f"missing temperature vintage: {exc}") from None
    values = predict_st(model, times, temps, model.variant_of_horizon(np.arange(1, N_HORIZONS + 1)))
    return QuantileForecast(origin, model.taus, values)


class STForecaster(BaseForecaster):
    """ST (``trend=True``) and SnT (``trend=False``) quantile regressions,
    refit every forecast day on all history."""

    refit = "daily"
    supports_temperature = True

    def __init__(self, trend=True, P=3, temperature="none", taus=None):
        self.trend = trend
        self.P = P
        self.temperature = temperature
        self.taus = taus

    def fit(self, series, temperature=None):
        spec = StDesignSpec(self.P, self.trend, self.temperature, self.taus)
        self.model_ = fit_st(series, spec, len(series), temperature)
        return self

    def predict(self, series, origin, temperature=None):
        self._check_fitted()
        return forecast_st(self.model_, series, origin, temperature)
