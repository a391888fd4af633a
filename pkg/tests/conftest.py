from datetime import datetime

import numpy as np
import pytest

from lvforecast.core import H, WEEK, LoadSeries, TemperatureData

START = datetime(2014, 1, 6)  # a Monday


def make_series(values, mask=None, feeder_id="f", start=START):
    return LoadSeries(feeder_id, start, np.asarray(values, dtype=float), mask)


def weekly_profile(seed=0, level=10.0):
    rng = np.random.default_rng(seed)
    return level + 3 * np.sin(2 * np.pi * np.arange(WEEK) / H) + rng.uniform(0, 2, WEEK)


def weekly_signal(n_days, seed=0, level=10.0):
    prof = weekly_profile(seed, level)
    return np.tile(prof, n_days // 7 + 1)[: n_days * H]


def flat_temperature(n_hours, value=10.0, start=START):
    days = n_hours // H
    actual = np.full(n_hours + 4 * H, value)
    from datetime import timedelta
    forecasts = {(start + timedelta(days=d)).date(): np.full(96, value) for d in range(days)}
    return TemperatureData(start, actual, forecasts)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
