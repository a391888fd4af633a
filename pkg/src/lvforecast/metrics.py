"""Point and probabilistic scores plus the statistics used to compare them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class ScoreNormalizer:
    """Average hourly load over the last year of training data."""

    mean_hourly_load: float

    def __post_init__(self):
        if not self.mean_hourly_load > 0:
            raise ValueError("normalizer must be positive")

    @classmethod
    def from_series(cls, series, train_end: int, hours: int = 365 * 24):
        lo = max(0, train_end - hours)
        vals = series.values[lo:train_end][series.mask[lo:train_end]]
        return cls(float(vals.mean()))


def _pair(actuals, forecasts):
    a = np.asarray(actuals, dtype=float).ravel()
    f = np.asarray(forecasts, dtype=float).ravel()
    if a.shape != f.shape:
        raise ValueError("actuals and forecasts must have equal lengths")
    return a, f


def mape(actuals, forecasts, mask=None, return_excluded=False):
    """Mean absolute percentage error in percent.

    Pairs with a zero or masked actual are dropped; ``return_excluded``
    also returns how many were dropped.
    """
    a, f = _pair(actuals, forecasts)
    keep = a != 0
    if mask is not None:
        keep &= np.asarray(mask, bool).ravel()
    if not keep.any():
        raise ValueError("no usable pairs for MAPE (all actuals zero or masked)")
    value = 100.0 * np.mean(np.abs(a[keep] - f[keep]) / np.abs(a[keep]))
    if return_excluded:
        return value, int(a.size - keep.sum())
    return value


def mae(actuals, forecasts, mask=None):
    a, f = _pair(actuals, forecasts)
    if mask is not None:
        m = np.asarray(mask, bool).ravel()
        a, f = a[m], f[m]
    return float(np.mean(np.abs(a - f)))


def rmae(actuals, forecasts, normalizer, mask=None):
    return 100.0 * mae(actuals, forecasts, mask) / _norm_value(normalizer)


def _norm_value(normalizer):
    value = getattr(normalizer, "mean_hourly_load", normalizer)
    if not value > 0:
        raise ValueError("normalizer must be positive")
    return float(value)


def pinball(actual, predicted_q, tau):
    """Pinball loss; broadcasts over arrays."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0) or np.any(tau >= 1):
        raise ValueError("tau must lie in (0, 1)")
    u = np.asarray(actual, dtype=float) - np.asarray(predicted_q, dtype=float)
    return np.where(u >= 0, tau * u, (tau - 1) * u)


def crps_from_quantiles(actual, quantiles, taus):
    """CRPS approximated by twice the mean pinball loss over the quantile grid.

    ``quantiles`` may be one row or a matrix with one row per actual; the
    result has the shape of ``actual``.
    """
    q = np.asarray(quantiles, dtype=float)
    taus = np.asarray(taus, dtype=float)
    if q.shape[-1] != taus.size:
        raise ValueError("quantile rows must match the tau grid")
    if np.any(np.diff(q, axis=-1) < 0):
        raise ValueError("quantile row crosses (values decrease in tau)")
    a = np.asarray(actual, dtype=float)
    loss = pinball(a[..., None], q, taus)
    return 2.0 * loss.mean(axis=-1)


def crps_from_ensemble(actual, sample):
    """Exact CRPS of the empirical distribution of ``sample``."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    m = x.size
    if m < 2:
        raise ValueError("ensemble needs at least two members")
    term1 = np.mean(np.abs(x - float(actual)))
    # sum_{i,j} |x_i - x_j| from order statistics
    i = np.arange(1, m + 1)
    pair_sum = 2.0 * np.sum((2 * i - m - 1) * x)
    return float(term1 - 0.5 * pair_sum / (m * m))


def rcrps(actuals, quantiles, taus, normalizer):
    """Relative CRPS in percent of the mean hourly load."""
    scores = crps_from_quantiles(actuals, quantiles, taus)
    return 100.0 * float(np.mean(scores)) / _norm_value(normalizer)


def ks_two_sample(x, y):
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    x = np.sort(np.asarray(x, dtype=float).ravel())
    y = np.sort(np.asarray(y, dtype=float).ravel())
    nx, ny = x.size, y.size
    if nx < 5 or ny < 5:
        raise ValueError("each sample needs at least 5 points")
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / nx
    fy = np.searchsorted(y, grid, side="right") / ny
    d = float(np.max(np.abs(fx - fy)))
    n_eff = nx * ny / (nx + ny)
    p = float(stats.kstwobign.sf(np.sqrt(n_eff) * d))
    return d, min(p, 1.0)


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    prefactor: float
    r2: float
    residuals: np.ndarray

    def __iter__(self):
        return iter((self.exponent, self.prefactor, self.r2))

    def predict(self, sizes):
        return self.prefactor * np.asarray(sizes, dtype=float) ** self.exponent


def power_law_fit(sizes, errors) -> PowerLawFit:
    """Least-squares line through (ln size, ln error)."""
    x = np.asarray(sizes, dtype=float).ravel()
    y = np.asarray(errors, dtype=float).ravel()
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need at least 3 paired points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs strictly positive inputs")
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ np.array([slope, icpt])
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(float(slope), float(np.exp(icpt)), float(r2), resid)


def score_correlation(x, y) -> float:
    """Pearson correlation between two per-feeder score vectors."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need two equal-length vectors with at least 3 entries")
    if np.std(x) == 0 or np.std(y) == 0:
        raise ValueError("correlation undefined for a zero-variance vector")
    return float(np.corrcoef(x, y)[0, 1])
