import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lvforecast.core import H, WEEK, origin_index
from lvforecast.seasonal_qr import (StDesignSpec, STForecaster, build_st_design, fit_pinball, fit_st,
                                    forecast_st, pinball_objective, predict_st)

from conftest import make_series, weekly_signal
from test_kde import _temps_with_perfect_vintages


def brute_force_intercept(y, tau, step=0.001):
    """Lowest grid point minimising the intercept-only pinball objective."""
    grid = np.arange(np.min(y) - 1, np.max(y) + 1 + step / 2, step)
    u = np.asarray(y)[None, :] - grid[:, None]
    obj = np.sum(np.where(u >= 0, tau * u, (tau - 1) * u), axis=1)
    best = obj.min()
    return grid[np.isclose(obj, best, rtol=0, atol=1e-9)].min(), best


def test_design_column_audit():
    spec = StDesignSpec(P=3, trend=True)
    assert spec.width == 24 + 24 * 6 + 168 == 336
    X = build_st_design([100], spec, centre=0.0)
    assert X.shape == (1, 336) and np.count_nonzero(X) <= 1 + 6 + 1
    X = build_st_design(np.arange(1, 400), spec, centre=3.0)
    assert np.all(np.count_nonzero(X, axis=1) <= 8)


def test_design_week_apart_no_trend():
    spec = StDesignSpec(P=2, trend=False)
    a, b = build_st_design([50, 50 + WEEK], spec)
    off = 24 * 4
    np.testing.assert_array_equal(a[off:], b[off:])
    assert not np.allclose(a[:off], b[:off])


def test_design_temperature_columns():
    spec = StDesignSpec(temperature="actual")
    X = build_st_design([5], spec, temps=[10.0])
    np.testing.assert_allclose(X[0, -3:], [10, 100, 1000])
    with pytest.raises(ValueError):
        build_st_design([5], spec)
    with pytest.raises(ValueError):
        StDesignSpec(P=4)


def test_pinball_intercept_examples():
    ones = np.ones((5, 1))
    assert fit_pinball(ones, [1, 2, 3, 4, 5], 0.5)[0] == pytest.approx(3.0)
    assert fit_pinball(np.ones((10, 1)), np.arange(1, 11), 0.9)[0] == pytest.approx(9.0)
    assert brute_force_intercept(np.arange(1, 11), 0.9)[0] == pytest.approx(9.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=1, max_size=12),
       st.sampled_from([0.1, 0.25, 0.5, 0.75, 0.9]))
def test_pinball_intercept_matches_brute_force(ys, tau):
    y = np.asarray(ys, dtype=float)
    beta = fit_pinball(np.ones((y.size, 1)), y, tau)[0]
    ref, best = brute_force_intercept(y, tau)
    assert pinball_objective(np.ones((y.size, 1)), y, [beta], tau) == pytest.approx(best, abs=1e-9)
    # the min-norm tie-break picks the optimum closest to zero
    grid = np.arange(np.min(y) - 1, np.max(y) + 1.0005, 0.001)
    u = y[None, :] - grid[:, None]
    obj = np.sum(np.where(u >= 0, tau * u, (tau - 1) * u), axis=1)
    optimal = grid[np.isclose(obj, obj.min(), rtol=0, atol=1e-9)]
    assert beta == pytest.approx(optimal[np.argmin(np.abs(optimal))], abs=1e-3)


def test_pinball_gaussian_regression_near_ols(rng):
    n = 10_000
    X = np.column_stack([np.ones(n), rng.normal(size=n), rng.uniform(size=n)])
    y = X @ [1.0, 2.0, -1.0] + rng.normal(size=n)
    beta = fit_pinball(X, y, 0.5)
    ols = np.linalg.lstsq(X, y, rcond=None)[0]
    np.testing.assert_allclose(beta, ols, atol=0.05)


def test_pinball_validation():
    with pytest.raises(ValueError):
        fit_pinball(np.ones((3, 1)), [1, 2], 0.5)
    with pytest.raises(ValueError):
        fit_pinball(np.ones((3, 1)), [1, 2, 3], 1.0)


def test_noiseless_weekly_reproduced():
    s = make_series(weekly_signal(70))
    model = fit_st(s, StDesignSpec(P=2, trend=True, taus=[0.5]), 63 * H)
    t = np.arange(63 * H + 1, 70 * H + 1)
    np.testing.assert_allclose(predict_st(model, t)[:, 0], s.values[t - 1], atol=1e-6)
    t_train = np.arange(1000, 1100)
    np.testing.assert_allclose(predict_st(model, t_train)[:, 0], s.values[t_train - 1], atol=1e-6)


def test_trend_tracked_by_st_not_snt(rng):
    # two whole years: periodic annual terms cannot absorb a linear trend
    days = 730 + 14
    t = np.arange(1, days * H + 1)
    vals = weekly_signal(days) + 0.01 * ((t - 1) // H) + rng.normal(0, 0.005, t.size)
    s = make_series(vals)
    train_end = 730 * H
    test = np.arange(train_end + 1, days * H + 1)
    err = {}
    for trend in (True, False):
        model = fit_st(s, StDesignSpec(P=2, trend=trend, taus=[0.5]), train_end)
        err[trend] = np.mean(vals[test - 1] - predict_st(model, test)[:, 0])
    span = 0.01 * (days - 730)
    assert abs(err[True]) < 0.1 * span
    assert err[False] >= 0.5 * span


def test_iqr_coverage_on_iid_noise():
    rng = np.random.default_rng(21)
    days = 365 + 420
    vals = weekly_signal(days, level=20) + rng.normal(0, 1, days * H)
    s = make_series(vals)
    model = fit_st(s, StDesignSpec(P=2, trend=False, taus=[0.25, 0.5, 0.75]), 365 * H)
    test = np.arange(365 * H + 1, 365 * H + 10_001)
    q = predict_st(model, test)
    inside = np.mean((vals[test - 1] >= q[:, 0]) & (vals[test - 1] <= q[:, 2]))
    assert inside == pytest.approx(0.5, abs=0.03)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_prediction_rows_monotone(seed):
    rng = np.random.default_rng(seed)
    s = make_series(weekly_signal(60) + rng.exponential(1, 60 * H))
    model = fit_st(s, StDesignSpec(P=2, taus=[0.1, 0.3, 0.5, 0.7, 0.9]), 58 * H)
    q = predict_st(model, np.arange(58 * H, 60 * H))
    assert np.all(np.diff(q, axis=1) >= 0)


def test_requires_eight_weeks():
    with pytest.raises(ValueError):
        fit_st(make_series(weekly_signal(50)), StDesignSpec(taus=[0.5]), 50 * H)


def test_ex_ante_equals_ex_post_with_perfect_forecasts(rng):
    days = 60
    temps = _temps_with_perfect_vintages(days, rng)
    vals = weekly_signal(days) + 0.1 * temps.actual[: days * H] + rng.normal(0, 0.1, days * H)
    s = make_series(vals)
    origin = origin_index(58)
    out = {}
    for mode in ("actual", "forecast"):
        est = STForecaster(P=2, temperature=mode, taus=[0.5]).fit(s.truncate(origin), temps)
        out[mode] = est.predict(s, origin, temps).values
    np.testing.assert_allclose(out["actual"], out["forecast"], atol=1e-8)
