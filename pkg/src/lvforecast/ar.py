"""Autoregressive forecasts on residuals from seasonal mean profiles.

Point models (ARWD, ARWDY) fit a weekly-dummy mean, optionally with annual
Fourier terms and a linear temperature term, by OLS and an AR model on the
residuals by Burg's method with the order picked by AIC.  The probabilistic
model fits the mean and a conditional scale on cumulative dummies by
lasso tuned with the Hannan-Quinn criterion, Yule-Walker AR coefficients,
and empirical quantiles of the standardised innovations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from sklearn.linear_model import lasso_path
from sklearn.utils.validation import check_array

from .base import (BaseForecaster, check_origin, check_series, check_taus,
                   check_temperature, horizon_times)
from .core import H, N_HORIZONS, WEEK, QuantileForecast, hour_of_day, period_of_week, rearrange

ANNUAL_PERIOD = 365 * H
FOURIER_ORDER = 2
DEFAULT_P_MAX = 192
VARIANTS = ("ARWD", "ARWDY")


# -- linear algebra -----------------------------------------------------------

def ols_fit(X, y):
    """Least squares through a column-pivoted QR decomposition.

    Raises ``ValueError`` naming the dependent columns when ``X`` is rank
    deficient.
    """
    X = check_array(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ValueError("X and y have inconsistent lengths")
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(X.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        dependent = sorted(int(j) for j in piv[rank:])
        raise ValueError(f"design is rank deficient; dependent columns: {dependent}")
    z = scipy.linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty_like(z)
    beta[piv] = z
    return beta


# -- AR estimation ------------------------------------------------------------

def _centre(x, demean):
    x = np.asarray(x, dtype=float).ravel()
    return x - x.mean() if demean else x


def _burg_path(x, p_max):
    """Burg recursion up to ``p_max``; returns per-order coefficient vectors
    (``x_t = sum phi_k x_{t-k} + e_t`` convention), noise variances and
    reflection coefficients."""
    n = x.size
    f = x.copy()
    b = x.copy()
    energy = float(x @ x) / n
    if energy <= 0:
        raise ValueError("Burg estimation needs a non-constant series (zero energy)")
    a = np.zeros(0)
    coefs, variances, reflections = [a], [energy], []
    for m in range(p_max):
        ff = f[m + 1:]
        bb = b[m:-1]
        den = float(ff @ ff + bb @ bb)
        if den <= 0:
            raise ValueError("Burg recursion hit zero prediction-error energy")
        k = -2.0 * float(ff @ bb) / den
        f[m + 1:], b[m + 1:] = ff + k * bb, bb + k * ff
        a = np.concatenate([a + k * a[::-1], [k]])
        energy *= 1.0 - k * k
        coefs.append(a)
        variances.append(energy)
        reflections.append(k)
    return [-c for c in coefs], np.array(variances), np.array(reflections)


def burg(series, p, demean=True):
    """AR(p) coefficients and innovation variance by Burg's method."""
    x = _centre(series, demean)
    if p < 1:
        raise ValueError("p must be >= 1")
    if x.size <= 2 * p:
        raise ValueError("series must be longer than 2p")
    coefs, variances, _ = _burg_path(x, p)
    return coefs[p], float(variances[p])


def burg_reflections(series, p, demean=True):
    x = _centre(series, demean)
    return _burg_path(x, p)[2]


def aic_curve(series, p_max, demean=True):
    """``n ln(sigma2_p) + 2p`` for p = 0..p_max from the Burg variances."""
    x = _centre(series, demean)
    _, variances, _ = _burg_path(x, p_max)
    return x.size * np.log(variances) + 2.0 * np.arange(p_max + 1)


def _cap_p_max(n, p_max):
    if p_max < 0:
        raise ValueError("p_max must be >= 0")
    return min(int(p_max), n // 4)


def aic_select(series, p_max=DEFAULT_P_MAX, demean=True):
    """AR order minimising AIC over 0..p_max (capped at n/4); smallest on ties."""
    x = np.asarray(series, dtype=float).ravel()
    p_max = _cap_p_max(x.size, p_max)
    if p_max == 0:
        return 0
    return int(np.argmin(aic_curve(x, p_max, demean)))


def _autocovariance(x, p):
    n = x.size
    return np.array([x[: n - k] @ x[k:] / n for k in range(p + 1)])


def _levinson(r, p):
    """Levinson-Durbin on autocovariances ``r``; per-order coefficients and
    innovation variances."""
    if r[0] <= 0:
        raise ValueError("singular autocovariance (zero variance)")
    phi = np.zeros(0)
    var = float(r[0])
    coefs, variances = [phi], [var]
    for m in range(1, p + 1):
        k = (r[m] - phi @ r[m - 1:0:-1]) / var
        if not abs(k) < 1:
            raise ValueError("singular autocovariance matrix")
        phi = np.concatenate([phi - k * phi[::-1], [k]])
        var *= 1.0 - k * k
        coefs.append(phi)
        variances.append(var)
    return coefs, np.array(variances)


def yule_walker(residuals, p, demean=True):
    """AR(p) coefficients from the Yule-Walker equations (Levinson-Durbin)."""
    x = _centre(residuals, demean)
    if p == 0:
        return np.zeros(0)
    if x.size <= 2 * p:
        raise ValueError("series must be longer than 2p")
    coefs, _ = _levinson(_autocovariance(x, p), p)
    return coefs[p]


def yule_walker_aic_select(residuals, p_max=DEFAULT_P_MAX, demean=True):
    x = _centre(residuals, demean)
    p_max = _cap_p_max(x.size, p_max)
    if p_max == 0:
        return 0
    _, variances = _levinson(_autocovariance(x, p_max), p_max)
    return int(np.argmin(x.size * np.log(variances) + 2.0 * np.arange(p_max + 1)))


def ar_innovations(r, phi):
    """One-step innovations ``r_t - sum phi_k r_{t-k}`` for t > p."""
    p = len(phi)
    r = np.asarray(r, dtype=float)
    if p == 0:
        return r.copy()
    lagged = np.column_stack([r[p - k: r.size - k] for k in range(1, p + 1)])
    return r[p:] - lagged @ phi


def ar_recursion(history, phi, steps):
    """Residual path ``steps`` ahead, feeding back predicted values."""
    p = len(phi)
    if p == 0:
        return np.zeros(steps)
    buf = list(np.asarray(history, dtype=float)[-p:])
    if len(buf) < p:
        buf = [0.0] * (p - len(buf)) + buf
    phi_rev = np.asarray(phi)[::-1]
    out = np.empty(steps)
    for k in range(steps):
        nxt = float(np.dot(phi_rev, buf[-p:]))
        out[k] = nxt
        buf.append(nxt)
    return out


# -- lasso with information-criterion tuning ----------------------------------

@dataclass(frozen=True)
class LassoHQCResult:
    intercept: float
    coef: np.ndarray
    alpha: float
    alphas: np.ndarray
    hqc: np.ndarray
    n_nonzero: np.ndarray

    def predict(self, X):
        return self.intercept + np.asarray(X, dtype=float) @ self.coef


def lasso_hqc(X, y, n_alphas=100, eps=1e-4):
    """Lasso path minimising HQC = n ln(RSS/n) + 2k ln ln n.

    Columns are standardised internally; zero-variance columns get a zero
    coefficient and the intercept is not penalised.
    """
    X = check_array(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if X.shape[0] != n:
        raise ValueError("X and y have inconsistent lengths")
    if n <= np.e:
        raise ValueError("HQC needs n > e")
    x_mean = X.mean(axis=0)
    x_sd = X.std(axis=0)
    live = x_sd > 1e-12 * max(1.0, float(np.abs(X).max()))
    Xs = (X[:, live] - x_mean[live]) / x_sd[live]
    y_mean = y.mean()
    yc = y - y_mean
    if live.any() and np.any(Xs.T @ yc != 0):
        alphas, path, _ = lasso_path(Xs, yc, eps=eps, n_alphas=n_alphas,
                                     precompute=True, max_iter=10000)
    else:
        alphas, path = np.array([0.0]), np.zeros((int(live.sum()), 1))
    resid = yc[:, None] - Xs @ path
    rss = np.maximum(np.sum(resid ** 2, axis=0), np.finfo(float).tiny)
    nnz = np.count_nonzero(path, axis=0)
    hqc = n * np.log(rss / n) + 2.0 * nnz * np.log(np.log(n))
    best = int(np.argmin(hqc))
    coef = np.zeros(X.shape[1])
    coef[live] = path[:, best] / x_sd[live]
    intercept = float(y_mean - x_mean @ coef)
    return LassoHQCResult(intercept, coef, float(alphas[best]), alphas, hqc, nnz)


# -- designs ------------------------------------------------------------------

def weekly_mean_design(times, fourier_order=0, temperature=None):
    """168 week-period dummies, optional annual Fourier pairs and a linear
    temperature column.  No global intercept (the dummies span it)."""
    times = np.asarray(times, dtype=np.int64)
    X = np.zeros((times.size, WEEK + 2 * fourier_order + (temperature is not None)))
    X[np.arange(times.size), period_of_week(times) - 1] = 1.0
    for k in range(1, fourier_order + 1):
        ang = 2 * np.pi * times * k / ANNUAL_PERIOD
        X[:, WEEK + 2 * (k - 1)] = np.sin(ang)
        X[:, WEEK + 2 * (k - 1) + 1] = np.cos(ang)
    if temperature is not None:
        X[:, -1] = temperature
    return X


def build_cumulative_design(times, K=FOURIER_ORDER, weekly_only=False):
    """Cumulative week dummies W_j = [pw(t) <= j], cumulative day dummies
    D_j = [hod(t) <= j] and day-dummy-interacted annual sin/cos terms."""
    times = np.asarray(times, dtype=np.int64)
    pw = period_of_week(times)[:, None]
    W = (pw <= np.arange(1, WEEK + 1)[None, :]).astype(float)
    if weekly_only:
        return W
    hod = hour_of_day(times)[:, None]
    D = (hod <= np.arange(1, H + 1)[None, :]).astype(float)
    blocks = [W, D]
    for k in range(1, K + 1):
        ang = 2 * np.pi * times * k / ANNUAL_PERIOD
        blocks.append(D * np.sin(ang)[:, None])
        blocks.append(D * np.cos(ang)[:, None])
    return np.hstack(blocks)


# -- point models -------------------------------------------------------------

@dataclass(frozen=True)
class ArPointModel:
    variant: str
    mean_coeffs: np.ndarray
    ar_coeffs: np.ndarray
    noise_var: float
    temperature: str = "none"
    horizon_day_variant: int = None

    @property
    def ar_order(self) -> int:
        return len(self.ar_coeffs)

    @property
    def fourier_order(self) -> int:
        return FOURIER_ORDER if self.variant == "ARWDY" else 0

    @property
    def temperature_coeffs(self):
        return None if self.temperature == "none" else self.mean_coeffs[-1:]

    def mean(self, times, temperature=None):
        X = weekly_mean_design(times, self.fourier_order, temperature)
        return X @ self.mean_coeffs


def _temperature_values(temps, times, mode, bucket):
    if mode == "none":
        return None
    if mode == "actual":
        return np.asarray(temps.actual_at(times), dtype=float)
    return temps.forecast_or_actual(times, bucket)


def _training_window(series, train_end, history_days):
    start = train_end - history_days * H + 1
    if start < 1:
        raise ValueError(f"need {history_days} days of history before the test period")
    return np.arange(start, train_end + 1)


def _observed_rows(series, times, extra=None):
    ok = series.mask[times - 1].copy()
    if extra is not None:
        ok &= np.isfinite(extra)
    return ok


def fit_ar_point(series, variant="ARWD", temperature=None, mode="none", train_end=None,
                 history_days=365, p_max=DEFAULT_P_MAX, bucket=1):
    """Fit one ARWD/ARWDY point model on the year before ``train_end``."""
    series = check_series(series)
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    temps = check_temperature(temperature, mode)
    train_end = len(series) if train_end is None else int(train_end)
    times = _training_window(series, train_end, history_days)
    temp = _temperature_values(temps, times, mode, bucket)
    fourier = FOURIER_ORDER if variant == "ARWDY" else 0
    X = weekly_mean_design(times, fourier, None if temp is None else np.nan_to_num(temp))
    y = series.values[times - 1]
    ok = _observed_rows(series, times, temp)
    beta = ols_fit(X[ok], y[ok])
    resid = np.where(ok, y - X @ beta, 0.0)
    scale = np.sqrt(np.mean(y[ok] ** 2))
    if np.sqrt(np.mean(resid ** 2)) <= 1e-9 * scale:
        phi, noise = np.zeros(0), 0.0
    else:
        p = aic_select(resid, p_max)
        phi, noise = burg(resid, p) if p else (np.zeros(0), float(np.var(resid)))
    return ArPointModel(variant, beta, np.asarray(phi), float(noise), mode,
                        bucket if mode != "none" else None)


def _history_residuals(model, series, origin, temps, depth):
    lo = max(1, origin - depth + 1)
    times = np.arange(lo, origin + 1)
    temp = _temperature_values(temps, times, model.temperature, model.horizon_day_variant or 1)
    mu = model.mean(times, None if temp is None else np.nan_to_num(temp))
    ok = _observed_rows(series, times, temp)
    return np.where(ok, series.values[times - 1] - mu, 0.0)


def _future_temperature(temps, origin, mode, n_horizons):
    if mode == "none":
        return None
    if mode == "actual":
        return np.asarray(temps.actual_at(horizon_times(origin, n_horizons)), dtype=float)
    day = (origin - 8) // H + 1
    return np.asarray(temps.vintage(day), dtype=float)[:n_horizons]


def forecast_ar_point(model, series, origin, temperature=None, n_horizons=N_HORIZONS):
    """Mean profile plus the AR residual recursion from the latest residuals."""
    origin = check_origin(series, origin)
    temps = temperature
    hist = _history_residuals(model, series, origin, temps, max(model.ar_order, 1))
    r_hat = ar_recursion(hist, model.ar_coeffs, n_horizons)
    times = horizon_times(origin, n_horizons)
    temp = _future_temperature(temps, origin, model.temperature, n_horizons)
    return model.mean(times, temp) + r_hat


# -- probabilistic model ------------------------------------------------------

@dataclass(frozen=True)
class ArProbModel:
    variant: str
    mean_model: LassoHQCResult
    sigma_model: LassoHQCResult
    ar_coeffs: np.ndarray
    C: float
    sigma_floor: float
    taus: np.ndarray
    z_quantiles: np.ndarray

    def design(self, times):
        return build_cumulative_design(times, weekly_only=self.variant == "ARWD")

    def mean(self, times):
        return self.mean_model.predict(self.design(times))

    def sigma(self, times):
        g = self.sigma_model.predict(self.design(times))
        return np.maximum(g, self.sigma_floor) / self.C


def fit_ar_prob(series, train_end=None, variant="ARWDY", taus=None, history_days=365,
                p_max=DEFAULT_P_MAX, max_nonpositive=0.01):
    """Fit the heteroscedastic AR model on the year before ``train_end``."""
    series = check_series(series)
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    taus = check_taus(taus)
    train_end = len(series) if train_end is None else int(train_end)
    times = _training_window(series, train_end, history_days)
    X = build_cumulative_design(times, weekly_only=variant == "ARWD")
    y = series.values[times - 1]
    ok = series.mask[times - 1]
    mean_model = lasso_hqc(X[ok], y[ok])
    resid = np.where(ok, y - mean_model.predict(X), 0.0)
    p = yule_walker_aic_select(resid, p_max)
    phi = yule_walker(resid, p)
    eps = ar_innovations(resid, phi)
    Xe = X[p:]
    keep = ok[p:]
    if p:
        # innovations touching an unobserved residual are unreliable
        for k in range(1, p + 1):
            keep &= ok[p - k: ok.size - k]
    sigma_model = lasso_hqc(Xe[keep], np.abs(eps[keep]))
    g = sigma_model.predict(Xe[keep])
    if np.mean(g <= 0) > max_nonpositive:
        raise ValueError("degenerate scale model: fitted |innovation| non-positive too often")
    floor = 1e-6 * float(np.mean(np.abs(eps[keep])))
    if floor <= 0:
        raise ValueError("degenerate scale model: innovations are identically zero")
    g = np.maximum(g, floor)
    u = eps[keep] / g
    C = 1.0 / float(np.std(u))
    z = eps[keep] / (g / C)
    zq = np.sort(np.quantile(z, taus))
    return ArProbModel(variant, mean_model, sigma_model, np.asarray(phi), C, floor, taus, zq)


def standardized_residuals(model, series, train_end=None, history_days=365):
    """Training-period ``eps_t / sigma_t`` of a fitted probabilistic model."""
    train_end = len(series) if train_end is None else int(train_end)
    times = _training_window(series, train_end, history_days)
    resid = series.values[times - 1] - model.mean(times)
    p = len(model.ar_coeffs)
    eps = ar_innovations(resid, model.ar_coeffs)
    return eps / model.sigma(times[p:])


def forecast_ar_prob(model, series, origin, n_horizons=N_HORIZONS):
    """Quantiles ``mu + r_hat + sigma * q_Z(tau)`` per horizon."""
    origin = check_origin(series, origin)
    p = len(model.ar_coeffs)
    lo = max(1, origin - max(p, 1) + 1)
    hist_t = np.arange(lo, origin + 1)
    hist = np.where(series.mask[hist_t - 1], series.values[hist_t - 1] - model.mean(hist_t), 0.0)
    r_hat = ar_recursion(hist, model.ar_coeffs, n_horizons)
    times = horizon_times(origin, n_horizons)
    centre = model.mean(times) + r_hat
    values = centre[:, None] + model.sigma(times)[:, None] * model.z_quantiles[None, :]
    return QuantileForecast(origin, model.taus, rearrange(values))


# -- estimator ----------------------------------------------------------------

class ARForecaster(BaseForecaster):
    """ARWD / ARWDY forecaster.

    The point forecast comes from the OLS+Burg model (four day-ahead
    variants when temperature is used); quantiles come from the
    heteroscedastic lasso model when ``probabilistic`` is set.
    """

    supports_temperature = True

    def __init__(self, variant="ARWD", temperature="none", probabilistic=True, taus=None,
                 p_max=DEFAULT_P_MAX, history_days=365):
        self.variant = variant
        self.temperature = temperature
        self.probabilistic = probabilistic
        self.taus = taus
        self.p_max = p_max
        self.history_days = history_days

    def fit(self, series, temperature=None):
        series = check_series(series)
        temps = check_temperature(temperature, self.temperature)
        if self.temperature == "forecast":
            self.point_models_ = [
                fit_ar_point(series, self.variant, temps, "forecast", len(series),
                             self.history_days, self.p_max, bucket=b) for b in range(1, 5)]
        else:
            model = fit_ar_point(series, self.variant, temps, self.temperature, len(series),
                                 self.history_days, self.p_max)
            self.point_models_ = [model] * 4
        self.prob_model_ = None
        if self.probabilistic:
            self.prob_model_ = fit_ar_prob(series, len(series), self.variant, self.taus,
                                           self.history_days, self.p_max)
        return self

    def predict_point(self, series, origin, temperature=None):
        self._check_fitted()
        out = np.empty(N_HORIZONS)
        cache = {}
        for b, model in enumerate(self.point_models_):
            if id(model) not in cache:
                cache[id(model)] = forecast_ar_point(model, series, origin, temperature)
            out[b * H:(b + 1) * H] = cache[id(model)][b * H:(b + 1) * H]
        return out

    def predict(self, series, origin, temperature=None):
        point = self.predict_point(series, origin, temperature)
        if self.prob_model_ is None:
            return QuantileForecast(origin, np.empty(0), np.empty((N_HORIZONS, 0)), point=point)
        prob = forecast_ar_prob(self.prob_model_, series, origin)
        return QuantileForecast(origin, prob.taus, prob.values, point=point)
