"""Power-exponent sweeps, the exponential law for p_opt, and lead-time curves."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .aggregate import PooledScores, mean_prediction_score, member_scores
from .climatology import _check_quantile, label_extreme, phi
from .errors import DegenerateLabelsError
from .metrics import auc, auc_many, relative_improvement

METHODS = ("power_mean", "mean_prediction", "persistence", "climatology")
DEFAULT_QUANTILES = (0.8, 0.85, 0.9, 0.95, 0.98)


@dataclass(frozen=True)
class SweepGrid:
    p_values: tuple

    def __post_init__(self):
        p = tuple(float(v) for v in self.p_values)
        object.__setattr__(self, "p_values", p)
        if not p or p[0] != 1.0:
            raise ValueError("the p grid must start at exactly 1")
        if any(b <= a for a, b in zip(p, p[1:])):
            raise ValueError("the p grid must be strictly increasing")

    @classmethod
    def log_spaced(cls, start=1.0, stop=1000.0, num=61):
        values = np.geomspace(start, stop, num)
        values[0] = start
        return cls(tuple(values))


@dataclass(frozen=True)
class EnsembleDataset:
    """Pooled classification samples.

    ``members`` is ``(n_members, n_samples)`` of forecast anomalies and
    ``truth`` the verifying anomalies.  ``persistence`` optionally holds the
    issue-day anomaly of every sample.
    """

    members: np.ndarray
    truth: np.ndarray
    persistence: np.ndarray = None

    def __post_init__(self):
        m = np.asarray(self.members, dtype=float)
        t = np.asarray(self.truth, dtype=float).ravel()
        m = m.reshape(m.shape[0], -1)
        if m.shape[1] != t.size:
            raise ValueError(f"{m.shape[1]} forecast samples for {t.size} truth values")
        object.__setattr__(self, "members", m)
        object.__setattr__(self, "truth", t)
        if self.persistence is not None:
            object.__setattr__(
                self, "persistence", np.asarray(self.persistence, dtype=float).ravel()
            )


@dataclass(frozen=True)
class SweepReport:
    q: float
    p_values: tuple
    auc_by_p: tuple
    p_opt: float
    auc_opt: float
    auc_mean_pred: float
    ri_opt: float


def _labels(dataset, q):
    _check_quantile(q)
    y = label_extreme(dataset.truth, q)
    if y.all() or not y.any():
        raise DegenerateLabelsError(f"labels at q={q} contain a single class")
    return y


def _argmax_smallest(values):
    # np.argmax returns the first maximum, i.e. the smallest p on ties
    return int(np.argmax(np.asarray(values)))


def _golden_refine(pooled, labels, lo, hi, iterations=24):
    """Golden-section search for the AUC maximum on ``log p`` in ``[lo, hi]``."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = math.log(lo), math.log(hi)
    evaluated = {}

    def f(logp):
        p = math.exp(logp)
        if p not in evaluated:
            evaluated[p] = auc(pooled.power_mean(p), labels)
        return evaluated[p]

    c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
    for _ in range(iterations):
        if f(c) >= f(d):
            b, d = d, c
            c = b - inv_phi * (b - a)
        else:
            a, c = c, d
            d = a + inv_phi * (b - a)
    return evaluated


def sweep_quantiles(dataset, quantiles=DEFAULT_QUANTILES, grid=None, refine=False, workers=1):
    """AUC over the p grid for several quantiles, sharing the pooled scores.

    Power means do not depend on ``q``, so each exponent is evaluated once
    and scored against every label set.  Results are assembled in grid
    order, whatever ``workers`` is.
    """
    grid = grid or SweepGrid.log_spaced()
    label_sets = [_labels(dataset, q) for q in quantiles]
    pooled = PooledScores(member_scores(dataset.members))

    def one(p):
        return auc_many(pooled.power_mean(p), label_sets)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        table = np.array(list(pool.map(one, grid.p_values)))
    baseline = auc_many(mean_prediction_score(dataset.members), label_sets)

    reports = []
    for k, q in enumerate(quantiles):
        column = table[:, k]
        i = _argmax_smallest(column)
        p_opt, auc_opt = grid.p_values[i], float(column[i])
        if refine and len(grid.p_values) > 1:
            lo = grid.p_values[max(i - 1, 0)]
            hi = grid.p_values[min(i + 1, len(grid.p_values) - 1)]
            for p, value in sorted(_golden_refine(pooled, label_sets[k], lo, hi).items()):
                if value > auc_opt:
                    p_opt, auc_opt = p, value
        reports.append(
            SweepReport(
                q=float(q),
                p_values=grid.p_values,
                auc_by_p=tuple(float(v) for v in column),
                p_opt=float(p_opt),
                auc_opt=auc_opt,
                auc_mean_pred=float(baseline[k]),
                ri_opt=relative_improvement(auc_opt, baseline[k]),
            )
        )
    return reports


def sweep_p(dataset, q, grid=None, refine=False, workers=1):
    """AUC as a function of p for one quantile, with p_opt and the relative improvement."""
    return sweep_quantiles(dataset, (q,), grid, refine, workers)[0]


@dataclass(frozen=True)
class ExponentialFit:
    """``ln(p_opt) ~ slope * q + intercept``."""

    slope: float
    intercept: float
    r_squared: float


def fit_exponential(points):
    """Ordinary least squares of ``ln(p_opt)`` on ``q``.

    ``r_squared`` is 1 for two points (a line through both) and 0 when
    ``ln(p_opt)`` does not vary at all (nothing to explain).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    q, p = pts[:, 0], pts[:, 1]
    if len(np.unique(q)) < 2:
        raise ValueError("at least two distinct quantiles are needed")
    if np.any(p < 1):
        raise ValueError("p_opt values must be >= 1")
    y = np.log(p)
    qc = q - q.mean()
    yc = y - y.mean()
    slope = float(np.dot(qc, yc) / np.dot(qc, qc))
    intercept = float(y.mean() - slope * q.mean())
    ss_tot = float(np.dot(yc, yc))
    if len(q) == 2:
        r2 = 1.0
    elif ss_tot == 0.0:
        r2 = 0.0
    else:
        resid = y - (slope * q + intercept)
        r2 = min(max(1.0 - float(np.dot(resid, resid)) / ss_tot, 0.0), 1.0)
    return ExponentialFit(slope, intercept, r2)


def predict_p_opt(fit, q):
    """``exp(slope * q + intercept)``, never below 1."""
    return max(1.0, math.exp(fit.slope * q + fit.intercept))


@dataclass(frozen=True)
class LeadCurve:
    """``curves[method]`` is a tuple of ``(lead, auc)`` pairs."""

    q: float
    p: float
    curves: dict

    def auc(self, method, lead):
        return dict(self.curves[method])[lead]


def evaluate_leads_many(datasets, p_by_q, leads):
    """:func:`evaluate_leads` for several ``(q, p)`` pairs, sharing per-lead work.

    Returns one :class:`LeadCurve` per entry of ``p_by_q``, in its order.
    """
    for lead in leads:
        if lead not in datasets:
            raise ValueError(f"no forecasts available at lead {lead}")
        if datasets[lead].persistence is None:
            raise ValueError(f"lead {lead} dataset has no persistence values")
    qs = list(p_by_q)
    curves = {q: {m: [] for m in METHODS} for q in qs}
    for lead in leads:
        ds = datasets[lead]
        label_sets = [_labels(ds, q) for q in qs]
        pooled = PooledScores(member_scores(ds.members))
        baselines = {
            "mean_prediction": auc_many(mean_prediction_score(ds.members), label_sets),
            "persistence": auc_many(phi(ds.persistence), label_sets),
            "climatology": auc_many(np.full(ds.truth.shape, phi(0.0)), label_sets),
        }
        for k, q in enumerate(qs):
            value = auc(pooled.power_mean(p_by_q[q]), label_sets[k])
            curves[q]["power_mean"].append((lead, value))
            for method, values in baselines.items():
                curves[q][method].append((lead, values[k]))
    return [
        LeadCurve(float(q), float(p_by_q[q]), {m: tuple(v) for m, v in curves[q].items()})
        for q in qs
    ]


def evaluate_leads(datasets, q, p, leads):
    """AUC per lead for the power mean at a fixed ``p`` and the three baselines.

    ``datasets`` maps each lead to an :class:`EnsembleDataset`; the
    persistence baseline scores ``phi`` of the issue-day anomaly and the
    climatology baseline is the constant ``phi(0) = 0.5``.
    """
    _check_quantile(q)
    return evaluate_leads_many(datasets, {q: p}, leads)[0]
