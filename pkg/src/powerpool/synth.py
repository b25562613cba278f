"""Synthetic truth process and ensemble forecaster.

The truth is a per-cell AR(1) process of standardized anomalies driven by
spatially correlated fractal-noise innovations::

    x[0]   = eta[0]
    x[d+1] = rho * x[d] + sqrt(1 - rho**2) * eta[d+1]

``rho`` may be a scalar or a per-cell field.  The forecaster draws members
from the AR(1) conditional law with a spread multiplier ``beta``::

    m_i(lead) = rho**lead * x[d] + beta * sqrt(1 - rho**(2*lead)) * eps_i

Each member keeps one noise field ``eps_i`` across all leads of an issue
day, as a member trajectory of a generative model would.
"""

import datetime as dt
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .climatology import day_of_year
from .grid import GridSpec, cell_centers
from .noise import FractalSpec, sample_sphere, sample_sphere_batch

_MASK64 = (1 << 64) - 1

# stream tags for derived seeds
TRUTH_STREAM = 1
MEMBER_STREAM = 2
SCALE_STREAM = 3
MASK_STREAM = 4

DEFAULT_START = dt.date(2000, 1, 1)


def derive_seed(seed, *keys):
    """Independent 64-bit seed for the stream identified by ``keys``."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@lru_cache(maxsize=8)
def _innovation_scale(grid, spatial, n_fields):
    seeds = [derive_seed(0, SCALE_STREAM, i) for i in range(n_fields)]
    sum_sq = np.zeros(grid.shape)
    for start in range(0, n_fields, 1000):
        batch = sample_sphere_batch(grid, spatial, seeds[start : start + 1000])
        sum_sq += np.sum(batch**2, axis=0)
    scale = np.sqrt(sum_sq / n_fields)
    if np.any(scale == 0):
        # e.g. odd N puts face-center cells on a lattice node of every octave
        f, r, c = np.argwhere(scale == 0)[0]
        raise ValueError(
            f"cell ({f}, {r}, {c}) sits on a lattice node of every octave, so its noise is "
            "identically zero; choose an even resolution or another base frequency"
        )
    scale.setflags(write=False)
    return scale


def innovation_scale(grid, spatial, n_fields=10_000):
    """Per-cell RMS of raw fractal noise, estimated once from seeded fields and cached.

    Dividing a raw field by this scale gives unit per-cell variance.
    """
    return _innovation_scale(grid, spatial, int(n_fields))


def unit_noise(grid, spatial, seeds, n_scale_fields=10_000):
    """Unit-variance spatially correlated fields, one per seed."""
    return sample_sphere_batch(grid, spatial, seeds) / innovation_scale(
        grid, spatial, n_scale_fields
    )


def land_sea_rho(grid, mean=0.8, spread=0.18, seed=0, spatial=None):
    """Two-regime persistence map: half the cells at ``mean + spread``, half at ``mean - spread``.

    The split follows a smooth synthetic land-sea mask, so the cell average
    is exactly ``mean`` and both regimes form coherent regions.
    """
    if spread < 0 or not (0.0 < mean - spread and mean + spread < 1.0):
        raise ValueError(f"rho regimes {mean - spread}, {mean + spread} must lie in (0, 1)")
    spatial = spatial or FractalSpec.default(base_frequency=2, n_octaves=2)
    mask_field = sample_sphere(grid, spatial, derive_seed(seed, MASK_STREAM))
    rank = np.argsort(np.argsort(mask_field.ravel(), kind="stable"), kind="stable")
    ocean = (rank >= grid.n_cells // 2).reshape(grid.shape)
    return np.where(ocean, mean + spread, mean - spread)


@dataclass(frozen=True)
class TruthProcess:
    grid: GridSpec = GridSpec(8)
    rho: object = 0.8
    spatial: FractalSpec = FractalSpec.default(n_octaves=2)
    seed: int = 0
    days: int = 4000
    start: dt.date = DEFAULT_START
    n_scale_fields: int = 10_000

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim and rho.shape != self.grid.shape:
            raise ValueError(f"rho field shape {rho.shape} does not match grid {self.grid.shape}")
        if np.any((rho <= 0) | (rho >= 1)):
            raise ValueError("rho must lie in (0, 1)")
        if self.days < 1:
            raise ValueError("days must be positive")

    @property
    def rho_field(self):
        return np.broadcast_to(np.asarray(self.rho, dtype=float), self.grid.shape)

    @property
    def dates(self):
        return [self.start + dt.timedelta(days=i) for i in range(self.days)]


def gen_truth(proc, workers=1, chunk=500):
    """Daily anomaly fields of the AR(1) truth, shape ``(days, 6, N, N)``."""
    seeds = [derive_seed(proc.seed, TRUTH_STREAM, d) for d in range(proc.days)]

    def make(start):
        return unit_noise(proc.grid, proc.spatial, seeds[start : start + chunk], proc.n_scale_fields)

    starts = range(0, proc.days, chunk)
    # innovations are independent of each other, so they can be built in any order
    innovation_scale(proc.grid, proc.spatial, proc.n_scale_fields)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        eta = np.concatenate(list(pool.map(make, starts)))
    rho = proc.rho_field
    innov = np.sqrt(1.0 - rho**2)
    x = np.empty_like(eta)
    x[0] = eta[0]
    for d in range(1, proc.days):
        x[d] = rho * x[d - 1] + innov * eta[d]
    return x


@dataclass(frozen=True)
class ForecastConfig:
    n_members: int = 50
    beta: float = 1.0
    leads: tuple = tuple(range(1, 13))

    def __post_init__(self):
        object.__setattr__(self, "leads", tuple(int(v) for v in self.leads))
        if self.n_members < 1:
            raise ValueError("n_members must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not self.leads or min(self.leads) < 1:
            raise ValueError("leads must be positive integers")


def _check_issue_day(truth, d, lead):
    if not 0 <= d < len(truth):
        raise ValueError(f"issue day {d} outside the truth record [0, {len(truth)})")
    if d + lead >= len(truth):
        raise ValueError(f"issue day {d} + lead {lead} runs past the truth record ({len(truth)} days)")


def member_noise(grid, spatial, seed, days, n_members, n_scale_fields=10_000):
    """Unit noise for every ``(issue day, member)``, shape ``(n_members, len(days), 6, N, N)``."""
    days = list(days)
    seeds = [derive_seed(seed, MEMBER_STREAM, d, i) for i in range(n_members) for d in days]
    eps = unit_noise(grid, spatial, seeds, n_scale_fields)
    return eps.reshape((n_members, len(days)) + grid.shape)


def members_at_lead(x_issue, eps, rho, beta, lead):
    """Apply the AR(1) forecast law; ``eps`` has the member axis first."""
    rho_l = rho**lead
    return rho_l * x_issue + beta * np.sqrt(1.0 - rho_l**2) * eps


def forecast_ensemble(truth, d, config, seed, rho=0.8, spatial=None, n_scale_fields=10_000):
    """Ensemble forecasts issued on day ``d``: ``{lead: (n_members, 6, N, N)}``."""
    truth = np.asarray(truth, dtype=float)
    for lead in config.leads:
        _check_issue_day(truth, d, lead)
    grid = GridSpec(truth.shape[-1])
    spatial = spatial or FractalSpec.default(n_octaves=2)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), grid.shape)
    eps = member_noise(grid, spatial, seed, [d], config.n_members, n_scale_fields)[:, 0]
    return {
        lead: members_at_lead(truth[d], eps, rho, config.beta, lead) for lead in config.leads
    }


def persistence_forecast(truth, d, lead):
    """No-change forecast: the issue-day state, whatever the lead."""
    _check_issue_day(truth, d, lead)
    return np.array(truth[d], dtype=float)


def climatology_forecast(grid):
    """The climatological mean in anomaly space: a zero field."""
    return np.zeros(grid.shape)


def analytic_persistence_rmse(rho, lead):
    """RMSE of persistence on a unit-variance AR(1): ``sqrt(2 * (1 - rho**lead))`` (cell-averaged)."""
    rho = np.asarray(rho, dtype=float)
    return float(np.sqrt(np.mean(2.0 * (1.0 - rho**lead))))


@dataclass
class ForecastSet:
    """Member noise for a block of issue days plus what is needed to build any lead.

    ``members(lead)`` returns ``(n_members, n_days, 6, N, N)`` anomalies and
    ``verifying(lead)`` the matching truth.
    """

    truth: np.ndarray
    issue_days: np.ndarray
    eps: np.ndarray
    rho: np.ndarray
    config: ForecastConfig

    def members(self, lead):
        x_issue = self.truth[self.issue_days]
        return members_at_lead(x_issue, self.eps, self.rho, self.config.beta, lead)

    def verifying(self, lead):
        return self.truth[self.issue_days + lead]

    def persistence(self, lead):
        return self.truth[self.issue_days]


def build_forecast_set(truth, issue_days, config, seed, rho, spatial, workers=1, chunk=50,
                       n_scale_fields=10_000):
    """Forecasts for many issue days, generated in chunks (optionally on threads).

    Output is independent of ``workers`` and ``chunk``: every member field is
    a pure function of ``(seed, issue day, member)``.
    """
    truth = np.asarray(truth, dtype=float)
    issue_days = np.asarray(issue_days, dtype=np.int64)
    for d in (issue_days.min(), issue_days.max()):
        _check_issue_day(truth, int(d), max(config.leads))
    grid = GridSpec(truth.shape[-1])
    blocks = [issue_days[i : i + chunk] for i in range(0, len(issue_days), chunk)]

    def make(block):
        return member_noise(grid, spatial, seed, block, config.n_members, n_scale_fields)

    innovation_scale(grid, spatial, n_scale_fields)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        eps = np.concatenate(list(pool.map(make, blocks)), axis=1)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), grid.shape)
    return ForecastSet(truth, issue_days, eps, rho, config)


def seasonal_reference(grid, dates, base=15.0, amplitude=8.0, spread=3.0):
    """Synthetic daily temperature climatology: mean and std per cell and date.

    A smooth annual cycle whose mean falls off toward the poles and whose
    amplitude and spread grow with latitude.  Only used to turn anomalies
    into plausible absolute values so the climatology fit can be exercised.
    """
    lat = np.radians(cell_centers(grid)[0])
    doy = np.array([day_of_year(d) for d in dates], dtype=float)
    cycle = np.cos(2.0 * np.pi * (doy - 200.0) / 365.0)[:, None, None, None]
    mean = base * (1.0 + np.cos(lat)) + amplitude * np.sin(lat) * cycle
    std = spread * (1.0 + 0.6 * np.abs(np.sin(lat))) * (1.0 + 0.2 * cycle)
    return mean, std
