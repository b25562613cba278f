"""End-to-end synthetic experiment: truth, forecasts, p sweep, lead curves, report bundle.

The record is split into a training period (the first ``train_days`` days)
and a validation period (the remaining ``days - train_days``).  Forecasts are
issued on every validation day; the truth is simulated ``max(leads)`` days
past the end so that every lead verifies.
"""

import dataclasses
import hashlib
import time
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, io
from .aggregate import PooledScores, mean_prediction_score, member_scores
from .climatology import DAYS_PER_YEAR, day_of_year, fit_climatology, label_extreme
from .grid import GridSpec
from .metrics import rmse, roc_curve
from .noise import FractalSpec
from .synth import (
    ForecastConfig,
    TruthProcess,
    analytic_persistence_rmse,
    build_forecast_set,
    gen_truth,
    land_sea_rho,
    seasonal_reference,
)
from .tuner import (
    DEFAULT_QUANTILES,
    EnsembleDataset,
    LeadCurve,
    SweepGrid,
    evaluate_leads_many,
    fit_exponential,
    predict_p_opt,
    sweep_quantiles,
)

LABEL_SOURCES = ("truth", "fitted")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of a run.  ``output_dir`` and ``workers`` do not affect results."""

    seed: int = 42
    days: int = 4000
    train_days: int = 3000
    resolution: int = 8
    rho: float = 0.8
    rho_spread: float = 0.18
    beta: float = 0.6
    n_members: int = 50
    leads: tuple = tuple(range(1, 13))
    tune_lead: int = 7
    quantiles: tuple = DEFAULT_QUANTILES
    lead_quantiles: tuple = (0.8, 0.9, 0.98)
    p_min: float = 1.0
    p_max: float = 1000.0
    p_count: int = 61
    refine: bool = False
    window_days: int = 31
    label_source: str = "truth"
    base_frequency: int = 4
    octaves: int = 2
    sigma_ln: float = 0.5
    scale_fields: int = 10_000
    roc_svg: bool = True
    workers: int = 1
    output_dir: str = "runs/default"

    def __post_init__(self):
        for name in ("leads", "quantiles", "lead_quantiles"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "leads", tuple(int(v) for v in self.leads))
        if self.train_days < 1 or self.train_days >= self.days:
            raise ValueError("train_days must lie in [1, days)")
        if self.tune_lead not in self.leads:
            raise ValueError(f"tune_lead {self.tune_lead} is not among the leads")
        if self.label_source not in LABEL_SOURCES:
            raise ValueError(f"label_source must be one of {LABEL_SOURCES}")
        if self.label_source == "fitted" and self.train_days < 2 * DAYS_PER_YEAR:
            raise ValueError(f"fitted labels need at least {2 * DAYS_PER_YEAR} training days")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.p_min != 1.0 or self.p_max <= self.p_min or self.p_count < 1:
            raise ValueError("the p grid must run from 1 up to p_max > 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if len(set(self.quantiles)) != len(self.quantiles):
            raise ValueError("quantiles must be distinct")
        # owning modules re-validate their own pieces
        GridSpec(self.resolution)
        self.spatial
        self.forecast
        self.p_grid
        for q in self.quantiles + self.lead_quantiles:
            if not 0.5 <= q < 1.0:
                raise ValueError(f"quantile must lie in [0.5, 1), got {q}")

    @property
    def grid(self):
        return GridSpec(self.resolution)

    @property
    def spatial(self):
        return FractalSpec.default(
            base_frequency=self.base_frequency, n_octaves=self.octaves, sigma_ln=self.sigma_ln
        )

    @property
    def forecast(self):
        return ForecastConfig(self.n_members, self.beta, self.leads)

    @property
    def p_grid(self):
        if self.p_count == 1:
            return SweepGrid((1.0,))
        return SweepGrid.log_spaced(self.p_min, self.p_max, self.p_count)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


class LeadDatasets(Mapping):
    """Per-lead :class:`EnsembleDataset` views of a forecast set, built on access.

    ``scale`` and ``offset`` (indexed by day) optionally re-express the
    anomalies against another climatology: ``x -> scale * x + offset``.
    """

    def __init__(self, forecasts, scale=None, offset=None):
        self.forecasts = forecasts
        self.scale = scale
        self.offset = offset

    def _map(self, x, days):
        if self.scale is None:
            return x
        return self.scale[days] * x + self.offset[days]

    def __getitem__(self, lead):
        fs = self.forecasts
        if lead not in fs.config.leads:
            raise KeyError(lead)
        verify = fs.issue_days + lead
        members = self._map(fs.members(lead), verify)
        return EnsembleDataset(
            members=members.reshape(members.shape[0], -1),
            truth=self._map(fs.verifying(lead), verify),
            persistence=self._map(fs.persistence(lead), fs.issue_days),
        )

    def __iter__(self):
        return iter(self.forecasts.config.leads)

    def __len__(self):
        return len(self.forecasts.config.leads)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    reports: list
    fit: object
    lead_curves: list
    rmse_rows: list
    roc_curves: dict
    timings: dict = dataclasses.field(default_factory=dict)


def rho_map(grid, rho, spread, seed):
    """Uniform ``rho`` when ``spread`` is 0, else the two-regime land-sea map."""
    if spread == 0:
        return np.full(grid.shape, float(rho))
    return land_sea_rho(grid, rho, spread, seed=seed)


def _fitted_transform(config, truth, dates):
    """Affine map from true anomalies to anomalies against a climatology fitted on training days."""
    mean, std = seasonal_reference(config.grid, dates)
    temperature = mean + std * truth
    clim = fit_climatology(temperature[: config.train_days], dates[: config.train_days],
                           config.window_days)
    doy = np.array([day_of_year(d) for d in dates])
    mu_fit, sd_fit = clim.mean[doy], clim.std[doy]
    return std / sd_fit, (mean - mu_fit) / sd_fit


def _rmse_rows(ds, lead, rho):
    return [
        (lead, "ensemble_mean", rmse(ds.members.mean(axis=0), ds.truth)),
        (lead, "persistence", rmse(ds.persistence, ds.truth)),
        (lead, "climatology", rmse(np.zeros_like(ds.truth), ds.truth)),
        (lead, "persistence_analytic", analytic_persistence_rmse(rho, lead)),
    ]


def _merge_curves(parts):
    """Join single-lead curves (one list per lead, same quantile order) into full curves."""
    merged = []
    for same_q in zip(*parts):
        curves = {m: sum((c.curves[m] for c in same_q), ()) for m in same_q[0].curves}
        merged.append(LeadCurve(same_q[0].q, same_q[0].p, curves))
    return merged


def run_experiment(config):
    """Run the full pipeline in memory and return an :class:`ExperimentResult`."""
    grid, spatial = config.grid, config.spatial
    timings = {}
    clock = time.perf_counter()

    def lap(stage):
        nonlocal clock
        now = time.perf_counter()
        timings[stage] = now - clock
        clock = now

    rho = rho_map(grid, config.rho, config.rho_spread, config.seed)
    max_lead = max(config.leads)
    proc = TruthProcess(grid, rho, spatial, config.seed, config.days + max_lead,
                        n_scale_fields=config.scale_fields)
    truth = gen_truth(proc, workers=config.workers)

    scale = offset = None
    if config.label_source == "fitted":
        scale, offset = _fitted_transform(config, truth, proc.dates)

    issue_days = np.arange(config.train_days, config.days)
    forecasts = build_forecast_set(truth, issue_days, config.forecast, config.seed, rho, spatial,
                                   workers=config.workers, n_scale_fields=config.scale_fields)
    datasets = LeadDatasets(forecasts, scale, offset)
    lap("generate")

    tune = datasets[config.tune_lead]
    reports = sweep_quantiles(tune, config.quantiles, config.p_grid, config.refine,
                              config.workers)
    fit = fit_exponential([(r.q, r.p_opt) for r in reports]) if len(reports) > 1 else None

    # p_opt comes from the tuning lead; unswept quantiles use the fitted law
    swept = {r.q: r.p_opt for r in reports}
    p_by_q = {}
    for q in config.lead_quantiles:
        if q in swept:
            p_by_q[q] = swept[q]
        elif fit is not None:
            p_by_q[q] = predict_p_opt(fit, q)
        else:
            raise ValueError(f"lead quantile {q} was not swept and no fit is available")
    lap("sweep")

    # one pass over the leads: each lead's members are built once
    parts, rows = [], []
    for lead in config.leads:
        ds = tune if lead == config.tune_lead else datasets[lead]
        rows.extend(_rmse_rows(ds, lead, rho))
        if p_by_q:
            parts.append(evaluate_leads_many({lead: ds}, p_by_q, [lead]))
    lead_curves = _merge_curves(parts) if parts else []
    lap("leads")

    roc = {}
    if config.roc_svg:
        pooled = PooledScores(member_scores(tune.members))
        baseline = mean_prediction_score(tune.members)
        for r in reports:
            y = label_extreme(tune.truth, r.q)
            roc[(r.q, "power_mean")] = roc_curve(pooled.power_mean(r.p_opt), y)
            roc[(r.q, "mean_prediction")] = roc_curve(baseline, y)
    lap("roc")
    return ExperimentResult(config, reports, fit, lead_curves, rows, roc, timings)


def _q_tag(q):
    return f"q{q:g}"


def bundle_files(result):
    """File names and writers of the report bundle, in a fixed order."""
    files = [
        ("sweep.csv", lambda p: io.write_csv(p, io.SWEEP_COLUMNS, io.sweep_rows(result.reports))),
        ("summary.json", lambda p: io.write_json(p, io.summary_dict(result.reports, result.fit))),
        ("rmse.csv", lambda p: io.write_csv(p, ("lead", "method", "rmse"), result.rmse_rows)),
    ]
    for curve in result.lead_curves:
        files.append(
            (f"leads_{_q_tag(curve.q)}.csv",
             lambda p, c=curve: io.write_csv(p, io.LEAD_COLUMNS, io.lead_rows(c)))
        )
    for (q, method), curve in result.roc_curves.items():
        files.append(
            (f"roc_{_q_tag(q)}_{method}.svg",
             lambda p, c=curve, q=q, m=method: io.render_roc_svg(c, p, title=f"{m}, q = {q:g}"))
        )
    return files


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(outdir, command, config, outputs, inputs=()):
    """Write ``manifest.json``: the command, resolved configuration and output hashes."""
    outdir = Path(outdir)
    manifest = {
        "command": command,
        "package_version": __version__,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {Path(p).name: _sha256(p) for p in outputs},
    }
    io.write_json(outdir / "manifest.json", manifest)


def prepare_output_dir(outdir):
    """Create a fresh run directory; existing non-empty directories are refused."""
    outdir = Path(outdir)
    if outdir.exists() and any(outdir.iterdir()):
        raise FileExistsError(f"output directory {outdir} is not empty; reports are never overwritten")
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir


def write_bundle(result, outdir):
    """Write the report bundle plus manifest into a fresh directory; returns the written paths."""
    outdir = prepare_output_dir(outdir)
    written = []
    for name, writer in bundle_files(result):
        writer(outdir / name)
        written.append(outdir / name)
    write_manifest(outdir, "report", result.config.to_dict(), written)
    return written
