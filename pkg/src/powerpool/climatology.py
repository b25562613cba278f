"""Local climatologies, anomaly standardization and extreme labels."""

import datetime as dt
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import InsufficientDataError

SIGMA_FLOOR = 1e-6
DAYS_PER_YEAR = 365

_SQRT_HALF = np.sqrt(0.5)


def phi(x):
    """Standard normal CDF, computed through the complementary error function."""
    out = 0.5 * special.erfc(-np.asarray(x, dtype=float) * _SQRT_HALF)
    return float(out) if out.ndim == 0 else out


def phi_inv(q):
    """Standard normal quantile function on the open interval (0, 1)."""
    q = np.asarray(q, dtype=float)
    if np.any(~((q > 0.0) & (q < 1.0))):
        raise ValueError("phi_inv is only defined for 0 < q < 1")
    out = special.ndtri(q)
    return float(out) if out.ndim == 0 else out


def day_of_year(date):
    """Zero-based day index in a 365-day year; Feb 29 shares Feb 28's slot."""
    day = 28 if (date.month == 2 and date.day == 29) else date.day
    return dt.date(2001, date.month, day).timetuple().tm_yday - 1


def date_range(start, days):
    return [start + dt.timedelta(days=i) for i in range(days)]


@dataclass(frozen=True)
class Climatology:
    """Per-cell, per-day-of-year mean and standard deviation.

    ``mean`` and ``std`` have shape ``(365, *field_shape)``.
    """

    mean: np.ndarray
    std: np.ndarray
    window_days: int
    source_years: tuple

    @property
    def field_shape(self):
        return self.mean.shape[1:]


def fit_climatology(series, dates, window_days=31):
    """Fit a smoothed day-of-year climatology.

    Each day-of-year ``d`` pools every value whose day-of-year lies within
    ``+-(window_days - 1) / 2`` of ``d`` (wrapping around the year end) and
    takes the sample mean and sample standard deviation (``ddof=1``).

    Parameters
    ----------
    series : array_like, shape (T, ...)
        One field per date.
    dates : sequence of datetime.date
        Date of every field.  Must span at least two full years.
    window_days : int
        Odd window width in days.

    Returns
    -------
    Climatology
    """
    series = np.asarray(series, dtype=float)
    if len(dates) != series.shape[0]:
        raise ValueError(f"{len(dates)} dates for {series.shape[0]} fields")
    if int(window_days) != window_days or window_days < 1 or window_days % 2 == 0:
        raise ValueError(f"window_days must be a positive odd integer, got {window_days}")
    if len(dates) == 0:
        raise InsufficientDataError("empty series")
    ordinals = np.array([d.toordinal() for d in dates])
    span = int(ordinals.max() - ordinals.min()) + 1
    if span < 2 * DAYS_PER_YEAR:
        raise InsufficientDataError(
            f"series spans {span} days; at least {2 * DAYS_PER_YEAR} are required"
        )

    # sorting by date makes the result independent of input order
    order = np.argsort(ordinals, kind="stable")
    series = series[order]
    doy = np.array([day_of_year(dates[i]) for i in order])
    shape = series.shape[1:]
    y = series.reshape(len(series), -1)
    ref = y.mean(axis=0)
    y = y - ref

    n_g = np.bincount(doy, minlength=DAYS_PER_YEAR).astype(float)
    s_g = np.zeros((DAYS_PER_YEAR, y.shape[1]))
    np.add.at(s_g, doy, y)
    m_g = np.divide(s_g, n_g[:, None], out=np.zeros_like(s_g), where=n_g[:, None] > 0)
    ss_g = np.zeros_like(s_g)
    np.add.at(ss_g, doy, (y - m_g[doy]) ** 2)

    half = (window_days - 1) // 2
    offsets = range(-half, half + 1) if window_days <= DAYS_PER_YEAR else range(DAYS_PER_YEAR)
    n_w = np.zeros(DAYS_PER_YEAR)
    s_w = np.zeros_like(s_g)
    for o in offsets:
        n_w += np.roll(n_g, -o)
        s_w += np.roll(s_g, -o, axis=0)
    if np.any(n_w == 0):
        raise InsufficientDataError("some day-of-year windows contain no data")
    mu = s_w / n_w[:, None]
    # within-group plus between-group sums of squares; no cancellation
    m2 = np.zeros_like(s_g)
    for o in offsets:
        n_o = np.roll(n_g, -o)[:, None]
        m2 += np.roll(ss_g, -o, axis=0) + n_o * (np.roll(m_g, -o, axis=0) - mu) ** 2
    dof = np.maximum(n_w - 1.0, 1.0)[:, None]
    sigma = np.sqrt(m2 / dof)
    sigma = np.maximum(sigma, SIGMA_FLOOR)

    years = sorted({d.year for d in dates})
    return Climatology(
        mean=(mu + ref).reshape((DAYS_PER_YEAR,) + shape),
        std=sigma.reshape((DAYS_PER_YEAR,) + shape),
        window_days=int(window_days),
        source_years=(years[0], years[-1]),
    )


def _clim_slices(field, dates, clim):
    field = np.asarray(field, dtype=float)
    single = isinstance(dates, dt.date)
    idx = day_of_year(dates) if single else np.array([day_of_year(d) for d in dates])
    expected = clim.field_shape if single else (len(dates),) + clim.field_shape
    if field.shape != expected:
        raise ValueError(f"field shape {field.shape} does not match climatology {expected}")
    return field, clim.mean[idx], clim.std[idx]


def standardize(field, date, clim):
    """Local anomaly ``(T - mean) / std`` for one date, or a stack of fields and dates."""
    field, mu, sigma = _clim_slices(field, date, clim)
    return (field - mu) / sigma


def destandardize(anomaly, date, clim):
    """Inverse of :func:`standardize`."""
    anomaly, mu, sigma = _clim_slices(anomaly, date, clim)
    return anomaly * sigma + mu


def _check_quantile(q):
    if not 0.5 <= q < 1.0:
        raise ValueError(f"quantile must lie in [0.5, 1), got {q}")


def label_extreme(anoms, q):
    """Binary labels ``1[phi(x) >= q]``, i.e. ``x >= phi_inv(q)``, as uint8."""
    _check_quantile(q)
    return (np.asarray(anoms, dtype=float) >= phi_inv(q)).astype(np.uint8)
