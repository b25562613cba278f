import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import phi_inv_oracle, phi_oracle
from powerpool.climatology import (
    SIGMA_FLOOR,
    date_range,
    day_of_year,
    destandardize,
    fit_climatology,
    label_extreme,
    phi,
    phi_inv,
    standardize,
)
from powerpool.errors import InsufficientDataError

START = dt.date(2001, 1, 1)


def test_phi_basic_values():
    assert phi(0.0) == 0.5
    assert phi(1.2815515655446004) == pytest.approx(0.9, abs=1e-9)
    assert abs(phi(1.2815515655446004) - phi_oracle(1.2815515655446004)) <= 1e-12


def test_phi_symmetry():
    x = np.random.default_rng(0).uniform(-8, 8, 1000)
    assert np.max(np.abs(phi(x) + phi(-x) - 1.0)) <= 1e-12


def test_phi_against_series_oracle():
    x = np.linspace(-8, 8, 401)
    expected = np.array([phi_oracle(v) for v in x])
    assert np.max(np.abs(phi(x) - expected)) <= 1e-9


def test_phi_strictly_increasing_on_grid():
    # near x = 8 neighbouring grid values differ by less than the double spacing
    # just below 1, so strictness is checked where it is representable
    assert np.all(np.diff(phi(np.linspace(-8, 6, 10_000))) > 0)
    assert np.all(np.diff(phi(np.linspace(-8, 8, 10_000))) >= 0)


def test_phi_inv_values():
    assert phi_inv(0.5) == pytest.approx(0.0, abs=1e-12)
    assert phi_inv(0.9) == pytest.approx(1.2815515655, abs=1e-8)
    assert phi_inv(0.9) == pytest.approx(phi_inv_oracle(0.9), abs=1e-12)


def test_phi_inv_round_trips():
    x = np.linspace(-5, 5, 1001)
    assert np.max(np.abs(phi_inv(phi(x)) - x)) <= 1e-8
    q = np.linspace(0.001, 0.999, 999)
    assert np.max(np.abs(phi(phi_inv(q)) - q)) <= 1e-9
    assert np.all(np.diff(phi_inv(q)) > 0)


@pytest.mark.parametrize("q", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_phi_inv_domain(q):
    with pytest.raises(ValueError):
        phi_inv(q)


def test_day_of_year_and_leap_day():
    assert day_of_year(dt.date(2001, 1, 1)) == 0
    assert day_of_year(dt.date(2001, 12, 31)) == 364
    assert day_of_year(dt.date(2004, 2, 29)) == day_of_year(dt.date(2004, 2, 28)) == 58
    assert day_of_year(dt.date(2004, 3, 1)) == 59
    assert day_of_year(dt.date(2004, 12, 31)) == 364


def test_constant_series():
    dates = date_range(START, 3 * 365)
    series = np.full((len(dates), 2, 3), 5.0)
    clim = fit_climatology(series, dates, 31)
    assert np.all(clim.mean == 5.0)
    assert np.all(clim.std == SIGMA_FLOOR)
    assert clim.mean.shape == (365, 2, 3) and clim.field_shape == (2, 3)
    assert clim.source_years == (2001, 2003) and clim.window_days == 31


def test_full_year_window_gives_global_mean():
    dates = date_range(START, 2 * 365)
    rng = np.random.default_rng(1)
    series = rng.normal(10, 3, (len(dates), 4))
    clim = fit_climatology(series, dates, 365)
    assert np.max(np.abs(clim.mean - series.mean(axis=0))) <= 1e-12
    assert np.max(np.abs(clim.std - series.std(axis=0, ddof=1))) <= 1e-12


def test_day_of_year_series_window_one():
    dates = date_range(START, 3 * 365)
    doy = np.array([day_of_year(d) for d in dates], dtype=float)
    series = np.repeat(doy[:, None], 5, axis=1)
    clim = fit_climatology(series, dates, 1)
    rng = np.random.default_rng(2)
    for _ in range(10):
        cell, d = rng.integers(5), rng.integers(365)
        assert clim.mean[d, cell] == d
        assert clim.std[d, cell] == SIGMA_FLOOR


def brute_force(series, dates, window, d, cell):
    half = (window - 1) // 2
    doy = np.array([day_of_year(x) for x in dates])
    dist = np.minimum((doy - d) % 365, (d - doy) % 365)
    vals = series[dist <= half, cell]
    return vals.mean(), max(vals.std(ddof=1), SIGMA_FLOOR)


def test_window_statistics_against_direct_pooling():
    dates = date_range(dt.date(2003, 6, 1), 4 * 365 + 100)  # includes a leap day
    rng = np.random.default_rng(3)
    series = 1000.0 + rng.normal(0, 2, (len(dates), 3)) + np.arange(len(dates))[:, None] * 1e-3
    clim = fit_climatology(series, dates, 31)
    for d in [0, 1, 14, 15, 58, 180, 350, 364]:
        for cell in range(3):
            mu, sd = brute_force(series, dates, 31, d, cell)
            assert clim.mean[d, cell] == pytest.approx(mu, abs=1e-10)
            assert clim.std[d, cell] == pytest.approx(sd, abs=1e-10)


def test_fit_is_order_invariant():
    dates = date_range(START, 800)
    rng = np.random.default_rng(4)
    series = rng.normal(0, 1, (800, 3))
    perm = rng.permutation(800)
    a = fit_climatology(series, dates, 15)
    b = fit_climatology(series[perm], [dates[i] for i in perm], 15)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.std, b.std)


def test_fit_errors():
    dates = date_range(START, 200)
    with pytest.raises(InsufficientDataError):
        fit_climatology(np.zeros((200, 2)), dates)
    with pytest.raises(InsufficientDataError):
        fit_climatology(np.zeros((500, 2)), date_range(START, 500))
    long = date_range(START, 800)
    with pytest.raises(ValueError):
        fit_climatology(np.zeros((800, 2)), long, 30)
    with pytest.raises(ValueError):
        fit_climatology(np.zeros((800, 2)), long, 0)
    with pytest.raises(ValueError):
        fit_climatology(np.zeros((799, 2)), long)


def fitted():
    dates = date_range(START, 3 * 365)
    rng = np.random.default_rng(5)
    series = rng.normal(15, 4, (len(dates), 6, 3, 3))
    return fit_climatology(series, dates, 31)


def test_standardize_identities():
    clim = fitted()
    day = dt.date(2010, 7, 4)
    d = day_of_year(day)
    mu, sd = clim.mean[d], clim.std[d]
    assert np.all(standardize(mu, day, clim) == 0.0)
    assert np.max(np.abs(standardize(mu + sd, day, clim) - 1.0)) <= 1e-12


def test_standardize_pointwise_and_inverse():
    clim = fitted()
    rng = np.random.default_rng(6)
    days = date_range(dt.date(2011, 1, 1), 40)
    temps = rng.normal(15, 4, (40, 6, 3, 3))
    anoms = standardize(temps, days, clim)
    for _ in range(20):
        t, f, r, c = rng.integers([40, 6, 3, 3])
        d = day_of_year(days[t])
        expected = (temps[t, f, r, c] - clim.mean[d, f, r, c]) / clim.std[d, f, r, c]
        assert anoms[t, f, r, c] == pytest.approx(expected, abs=1e-12)
    assert np.max(np.abs(destandardize(anoms, days, clim) - temps)) <= 1e-12


def test_standardize_shape_mismatch():
    clim = fitted()
    with pytest.raises(ValueError):
        standardize(np.zeros((6, 4, 4)), dt.date(2001, 1, 1), clim)


def test_zero_anomaly_survives_round_trip():
    clim = fitted()
    day = dt.date(2002, 2, 2)
    zero = np.zeros(clim.field_shape)
    temps = destandardize(zero, day, clim)
    assert np.max(np.abs(standardize(temps, day, clim))) <= 1e-12


def test_labels_basic():
    assert np.all(label_extreme(np.zeros((6, 4, 4)), 0.9) == 0)
    t = phi_inv(0.9)
    labels = label_extreme(np.full((6, 4, 4), t), 0.9)
    assert np.all(labels == 1) and labels.dtype == np.uint8


def test_label_frequency_matches_quantile():
    x = np.random.default_rng(7).standard_normal(6 * 48 * 48 * 100)
    assert abs(label_extreme(x, 0.8).mean() - 0.2) <= 0.005


@pytest.mark.parametrize("q", [0.49, 1.0, 1.2])
def test_label_quantile_range(q):
    with pytest.raises(ValueError):
        label_extreme(np.zeros(3), q)


@given(st.floats(0.5, 0.999), st.floats(0.5, 0.999), st.integers(0, 10_000))
def test_labels_nested_in_quantile(q1, q2, seed):
    lo, hi = sorted((q1, q2))
    x = np.random.default_rng(seed).standard_normal(200)
    assert np.all(label_extreme(x, lo) >= label_extreme(x, hi))


@given(st.floats(-8, 8))
def test_label_equals_phi_rule(x):
    for q in (0.5, 0.8, 0.95):
        assert label_extreme(np.array([x]), q)[0] == int(x >= phi_inv(q))
