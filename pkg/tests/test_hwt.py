import numpy as np
import pytest

from lvforecast.core import H, WEEK, origin_index
from lvforecast.hwt import (BURN_IN, START, HwtParams, HwtState, HWTForecaster, hwt_deterministic,
                            hwt_estimate, hwt_filter, hwt_forecast, hwt_init, hwt_sse,
                            simulate_paths)

from conftest import make_series, weekly_signal

ZERO = HwtParams(0.0, 0.0, 0.0, 0.0)


def hwt_generated(params, days, seed, sd=1.0):
    rng = np.random.default_rng(seed)
    prof = weekly_signal(7, seed) - 10
    state = HwtState(100.0, np.zeros(H), prof.copy(), 0.0, 0)
    eps = rng.normal(0, sd, (1, days * H))
    return make_series(simulate_paths(state, params, 0, eps)[0])


def test_params_validation():
    with pytest.raises(ValueError):
        HwtParams(1.5, 0, 0, 0)
    with pytest.raises(ValueError):
        HwtParams(0, 0, 0, 1.0)


def test_init_constant_series():
    st = hwt_init(make_series(np.full(BURN_IN, 4.0)))
    assert st.level == pytest.approx(4.0)
    np.testing.assert_allclose(st.d, 0, atol=1e-12)
    np.testing.assert_allclose(st.w, 0, atol=1e-12)


def test_init_weekly_signal():
    vals = weekly_signal(28)
    st = hwt_init(make_series(vals))
    t = np.arange(BURN_IN)
    fitted = st.level + st.d[t % H] + st.w[t % WEEK]
    np.testing.assert_allclose(fitted, vals, atol=1e-9)
    # a purely weekly profile is carried entirely by w: d is the hourly mean of w minus itself
    np.testing.assert_allclose(st.d, 0, atol=1e-9 * np.abs(vals).max())


def test_init_sum_within_noise(rng):
    vals = weekly_signal(28) + rng.normal(0, 0.5, BURN_IN)
    st = hwt_init(make_series(vals))
    t = np.arange(BURN_IN)
    resid = vals - (st.level + st.d[t % H] + st.w[t % WEEK])
    assert np.std(resid) < 0.5


def test_init_too_short():
    with pytest.raises(ValueError):
        hwt_init(make_series(np.ones(BURN_IN - 1)))


def test_single_step_by_hand():
    state = HwtState(10.0, np.full(H, 2.0), np.full(WEEK, 3.0), 1.0, 0)
    params = HwtParams(0.1, 0.0, 0.0, 0.5)
    new, errors, onestep = hwt_filter(make_series([16.5]), params, init=state)
    assert 16.5 - onestep[0] == pytest.approx(15.5)
    assert errors[0] == pytest.approx(1.5)
    assert new.level == pytest.approx(10.15)


def test_zero_params_constant_prediction(rng):
    vals = weekly_signal(35) + rng.normal(0, 0.3, 35 * H)
    s = make_series(vals)
    init = hwt_init(s)
    state, errors, _ = hwt_filter(s, ZERO, init)
    t = np.arange(len(s))
    base = init.level + init.d[t % H] + init.w[t % WEEK]
    np.testing.assert_allclose(errors, vals - base, atol=1e-12)
    assert state.level == init.level


def test_noiseless_init_gives_zero_errors():
    s = make_series(weekly_signal(42))
    _, errors, _ = hwt_filter(s, HwtParams(*START), hwt_init(s))
    np.testing.assert_allclose(errors, 0, atol=1e-9)


def test_estimate_recovers_generator():
    truth = HwtParams(0.2, 0.05, 0.1, 0.4)
    s = hwt_generated(truth, 365, 3)
    fit = hwt_estimate(s, return_fit=True)
    np.testing.assert_allclose(fit.params.as_array(), truth.as_array(), atol=0.1)
    assert fit.objective <= fit.start_objective


def test_estimate_noiseless_periodic():
    s = make_series(weekly_signal(70))
    params = hwt_estimate(s)
    assert hwt_sse(s, params) < 1e-6 * len(s)


def test_zero_noise_pool_gives_deterministic_quantiles():
    s = hwt_generated(HwtParams(0.2, 0.05, 0.1, 0.4), 70, 4)
    params = HwtParams(0.2, 0.05, 0.1, 0.4)
    origin = origin_index(65)
    fc = hwt_forecast(s, params, origin, [0.1, 0.5, 0.9], n_paths=50, pool=np.zeros(10))
    det = hwt_deterministic(s, params, origin)
    for j in range(3):
        np.testing.assert_allclose(fc.values[:, j], det, atol=1e-12)


# Monte-Carlo standard error of a Gaussian sample median is sqrt(pi/2) times that of the mean.
MEDIAN_SE = np.sqrt(np.pi / 2)


def _median_deviation(s, params, origin, seed, n_paths=1000):
    """Standardised gap between the ensemble median and the noise-free path."""
    fc = hwt_forecast(s, params, origin, [0.5], n_paths=n_paths, seed=seed, noise="gaussian")
    det = hwt_deterministic(s, params, origin)
    state, _, onestep = hwt_filter(s, params, t_end=origin)
    pool = onestep[BURN_IN:][np.isfinite(onestep[BURN_IN:])]
    rng = np.random.default_rng(seed)  # replays the draws used by hwt_forecast
    paths = simulate_paths(state, params, origin, rng.normal(0, np.std(pool), (n_paths, 96)))
    se = MEDIAN_SE * paths.std(axis=0) / np.sqrt(n_paths)
    return (fc.values[:, 0] - det) / se


@pytest.fixture(scope="module")
def hwt_case():
    params = HwtParams(0.2, 0.05, 0.1, 0.4)
    return hwt_generated(params, 70, 5), params, origin_index(65)


def test_ensemble_median_near_deterministic(hwt_case):
    s, params, origin = hwt_case
    assert np.all(np.abs(_median_deviation(s, params, origin, seed=1)) <= 3)


def test_ensemble_median_unbiased_across_seeds(hwt_case):
    s, params, origin = hwt_case
    z = np.array([_median_deviation(s, params, origin, seed) for seed in range(100, 150)])
    assert abs(z.mean()) < 0.35
    assert 0.8 < z.std() < 1.2


def test_same_seed_same_quantiles():
    s = hwt_generated(HwtParams(0.2, 0.05, 0.1, 0.4), 70, 6)
    est = HWTForecaster(taus=[0.1, 0.5, 0.9], n_paths=200, seed=3).fit(s.truncate(60 * H))
    a = est.predict(s, origin_index(62)).values
    b = est.predict(s, origin_index(62)).values
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        hwt_forecast(s, est.params_, origin_index(62), noise="laplace")
